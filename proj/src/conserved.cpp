#include "noetherkit/conserved.hpp"

#include <cmath>

namespace noether {

namespace {

enum class SymmetryShape { Symmetric, Antisymmetric, Neither };

SymmetryShape classify(const Matrix& m) {
  double sym = 0.0, antisym = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      sym = std::max(sym, std::fabs(m(i, j) - m(j, i)));
      antisym = std::max(antisym, std::fabs(m(i, j) + m(j, i)));
      scale = std::max(scale, std::fabs(m(i, j)));
    }
  const double tol = 1e-12 * (1.0 + scale);
  if (sym <= tol) return SymmetryShape::Symmetric;
  if (antisym <= tol) return SymmetryShape::Antisymmetric;
  return SymmetryShape::Neither;
}

}  // namespace

double infinitesimal_pairing(const MlpParams& p, const HiddenLieElement& m,
                             const PiSpec& pi) {
  const MlpParams tangent = apply_infinitesimal(p, m, pi);
  double s = 0.0;
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    s += frobenius_dot(p.weights[i], tangent.weights[i]);
  if (p.biases)
    for (std::size_t i = 0; i < p.biases->size(); ++i)
      s += dot((*p.biases)[i], (*tangent.biases)[i]);
  return s;
}

double q_m(const MlpParams& p, const HiddenLieElement& m, const PiSpec& pi) {
  for (const Matrix& gen : m.ms) {
    switch (classify(gen)) {
      case SymmetryShape::Symmetric:
        break;
      case SymmetryShape::Antisymmetric:
        throw ShapeError(
            "q_m: antisymmetric generator gives the identically-zero pairing; "
            "rejected as degenerate");
      case SymmetryShape::Neither:
        throw ShapeError("q_m: generator must be symmetric within 1e-12");
    }
  }
  return infinitesimal_pairing(p, m, pi);
}

Matrix q_imbalance_matrix(const Matrix& u, const Matrix& v) {
  if (u.cols() != v.rows())
    throw ShapeError("q_imbalance_matrix: hidden widths disagree");
  return matmul(v, transpose(v)) - matmul(transpose(u), u);
}

Vector q_homogeneous_diag(const Matrix& u, const Matrix& v, double alpha) {
  if (u.cols() != v.rows())
    throw ShapeError("q_homogeneous_diag: hidden widths disagree");
  const std::size_t h = v.rows();
  Vector q(h);
  for (std::size_t k = 0; k < h; ++k) {
    double vv = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) vv += v(k, j) * v(k, j);
    double uu = 0.0;
    for (std::size_t i = 0; i < u.rows(); ++i) uu += u(i, k) * u(i, k);
    q[k] = vv - alpha * uu;
  }
  return q;
}

double elementwise_antiderivative(const Activation& act, double x) {
  switch (act.kind) {
    case ActKind::Identity:
      return 0.5 * x * x;
    case ActKind::LeakyReLU:
      if (act.slope <= 0.0)
        throw ShapeError(
            "elementwise_antiderivative: LeakyReLU needs a positive slope "
            "(sigma/sigma' is undefined where sigma' = 0)");
      return 0.5 * x * x;
    case ActKind::Sigmoid:
      return x + std::exp(x);
    case ActKind::Tanh:
      return 0.25 * std::cosh(2.0 * x);
    default:
      throw ShapeError(
          "elementwise_antiderivative: no closed form for this activation");
  }
}

double q_elementwise_integral(const Matrix& u, const Matrix& v,
                              const Activation& act, double x0) {
  if (u.cols() != v.rows())
    throw ShapeError("q_elementwise_integral: hidden widths disagree");
  double f1 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) f1 += u.data()[i] * u.data()[i];
  f1 *= 0.5;
  const double f0 = elementwise_antiderivative(act, x0);
  double f2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    f2 += elementwise_antiderivative(act, v.data()[i]) - f0;
  return f1 - f2;
}

Matrix angular_momentum_residual(const Matrix& u, const Matrix& v,
                                 const Matrix& g_u, const Matrix& g_v) {
  if (!u.same_shape(g_u) || !v.same_shape(g_v) || u.cols() != v.rows())
    throw ShapeError("angular_momentum_residual: shape mismatch");
  // Velocities under gradient flow.
  const Matrix udot = -1.0 * g_u;
  const Matrix vdot = -1.0 * g_v;
  return matmul(v, transpose(vdot)) - matmul(vdot, transpose(v)) +
         matmul(transpose(u), udot) - matmul(transpose(udot), u);
}

Vector q_radial_spectral(const Vector& u_diag, const Vector& v_diag) {
  if (u_diag.size() != v_diag.size())
    throw ShapeError("q_radial_spectral: diagonal lengths disagree");
  Vector q(u_diag.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = u_diag[i] * u_diag[i] + v_diag[i] * v_diag[i];
  return q;
}

double q_ellipse(const Vector& w, double a) {
  if (w.size() != 2) throw ShapeError("q_ellipse: state must be (w1, w2)");
  if (w[1] == 0.0) throw ShapeError("q_ellipse: undefined at w2 = 0");
  return std::pow(w[0] * w[0], a) / (w[1] * w[1]);
}

QBaseline normalized_q_baseline(const Matrix& u0, const Matrix& v0,
                                const Activation& act, double x0) {
  QBaseline b;
  double f1 = 0.0;
  for (std::size_t i = 0; i < u0.size(); ++i) f1 += u0.data()[i] * u0.data()[i];
  b.f1_abs = std::fabs(0.5 * f1);
  const double f0 = elementwise_antiderivative(act, x0);
  double f2 = 0.0;
  for (std::size_t i = 0; i < v0.size(); ++i)
    f2 += elementwise_antiderivative(act, v0.data()[i]) - f0;
  b.f2_abs = std::fabs(f2);
  return b;
}

double normalized_q(const Matrix& u, const Matrix& v, const Activation& act,
                    double x0, const QBaseline& baseline) {
  const double denom = baseline.f1_abs + baseline.f2_abs;
  if (denom == 0.0) throw ShapeError("normalized_q: zero baseline");
  return std::fabs(q_elementwise_integral(u, v, act, x0)) / denom;
}

QSpec QSpec::imbalance(std::size_t layer) {
  QSpec s;
  s.variant = Variant::ImbalanceMatrix;
  s.name = "imbalance";
  s.layer = layer;
  return s;
}

QSpec QSpec::qm(HiddenLieElement m, PiSpec pi) {
  QSpec s;
  s.variant = Variant::QM;
  s.name = "qm";
  s.generator = std::move(m);
  s.pi = pi;
  return s;
}

QSpec QSpec::homogeneous_diag(double alpha) {
  QSpec s;
  s.variant = Variant::HomogeneousDiag;
  s.name = "homog_diag";
  s.alpha = alpha;
  return s;
}

QSpec QSpec::elementwise_integral(Activation act, double x0) {
  QSpec s;
  s.variant = Variant::ElementwiseIntegral;
  s.name = "elem_integral";
  s.act = act;
  s.x0 = x0;
  return s;
}

QSpec QSpec::radial_spectral_lambda() {
  QSpec s;
  s.variant = Variant::RadialSpectralLambda;
  s.name = "radial_lambda";
  return s;
}

QSpec QSpec::ellipse(double a) {
  QSpec s;
  s.variant = Variant::EllipseQ;
  s.name = "ellipse_q";
  s.ellipse_a = a;
  return s;
}

namespace {

Vector flatten_matrix(const Matrix& m) {
  Vector v(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.data()[i];
  return v;
}

void require_two_layer(const MlpParams& p, const char* what) {
  if (p.weights.size() != 2)
    throw ShapeError(std::string(what) + ": needs a two-layer network");
}

}  // namespace

Vector qspec_evaluate(const QSpec& spec, const MlpParams& p) {
  switch (spec.variant) {
    case QSpec::Variant::ImbalanceMatrix: {
      if (spec.layer < 1 || spec.layer >= p.weights.size())
        throw ShapeError("qspec_evaluate: imbalance layer index out of range");
      const Matrix& below = p.weights[spec.layer - 1];
      const Matrix& above = p.weights[spec.layer];
      return flatten_matrix(matmul(below, transpose(below)) -
                            matmul(transpose(above), above));
    }
    case QSpec::Variant::QM:
      return Vector{q_m(p, spec.generator, spec.pi)};
    case QSpec::Variant::HomogeneousDiag:
      require_two_layer(p, "qspec_evaluate: HomogeneousDiag");
      return q_homogeneous_diag(p.weights[1], p.weights[0], spec.alpha);
    case QSpec::Variant::ElementwiseIntegral:
      require_two_layer(p, "qspec_evaluate: ElementwiseIntegral");
      return Vector{
          q_elementwise_integral(p.weights[1], p.weights[0], spec.act, spec.x0)};
    case QSpec::Variant::RadialSpectralLambda:
    case QSpec::Variant::EllipseQ:
      throw ShapeError(
          "qspec_evaluate: reduced-system quantity cannot be evaluated on "
          "network parameters");
  }
  throw ShapeError("qspec_evaluate: unknown variant");
}

}  // namespace noether
