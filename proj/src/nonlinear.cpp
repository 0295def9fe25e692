#include "noetherkit/nonlinear.hpp"

#include <cmath>

namespace noether {

namespace {

double suffix_norm(const Vector& z, std::size_t from) {
  double s = 0.0;
  for (std::size_t i = from; i < z.size(); ++i) s += z[i] * z[i];
  return std::sqrt(s);
}

bool is_identity(const Matrix& g) {
  if (g.rows() != g.cols()) return false;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      if (g(i, j) != (i == j ? 1.0 : 0.0)) return false;
  return true;
}

Vector column(const Matrix& m, std::size_t j) {
  Vector v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, j);
  return v;
}

Vector apply_act(const Activation& act, const Vector& z) {
  Matrix col(z.size(), 1);
  for (std::size_t i = 0; i < z.size(); ++i) col(i, 0) = z[i];
  return column(activation_apply(act, col), 0);
}

void check_anchor(const Activation& act, const Vector& pre, const Vector& post,
                  const char* what) {
  if (norm(post) <= 1e-10)
    throw DegenerateAnchorError(std::string(what) +
                                ": feature vector at the anchor is numerically zero");
  if (act.zero_at_zero() && norm(pre) <= 1e-10)
    throw DegenerateAnchorError(std::string(what) +
                                ": pre-activation at the anchor is numerically zero");
}

}  // namespace

SphericalCoords spherical_coordinates(const Vector& z) {
  const std::size_t h = z.size();
  if (h == 0) throw ShapeError("spherical_coordinates: empty vector");
  SphericalCoords out;
  out.r = norm(z);
  if (out.r == 0.0)
    throw ShapeError("spherical_coordinates: zero vector has no angles");
  if (h == 1) {
    if (z[0] < 0.0)
      throw ShapeError(
          "spherical_coordinates: 1-d coordinates exist for positive entries only");
    return out;  // no angles
  }
  out.angles = Vector(h - 1);
  for (std::size_t i = 0; i + 1 < h; ++i) {
    if (suffix_norm(z, i) < 1e-12 * out.r) break;  // remaining angles stay 0
    if (i + 2 < h)
      out.angles[i] = std::atan2(suffix_norm(z, i + 1), z[i]);
    else
      out.angles[i] = std::atan2(z[h - 1], z[h - 2]);
  }
  return out;
}

Matrix rotation_from_angles(const Vector& beta) {
  const std::size_t n = beta.size();
  const std::size_t dim = n + 1;
  // b[0] = b[n+1] = 0 padding around the given angles.
  auto b = [&](std::size_t k) { return (k == 0 || k == n + 1) ? 0.0 : beta[k - 1]; };
  Matrix r(dim, dim);
  for (std::size_t i = 1; i <= dim; ++i) {
    for (std::size_t j = 1; j <= dim; ++j) {
      double val = 0.0;
      if (j <= i) {
        val = std::cos(b(j - 1)) * std::cos(b(i));
        for (std::size_t k = j; k < i; ++k) val *= std::sin(b(k));
      } else if (j == i + 1) {
        val = -std::sin(b(i));
      }
      r(i - 1, j - 1) = val;
    }
  }
  return r;
}

Matrix RMatrix::inv() const {
  if (znorm == 0.0)
    throw ShapeError("RMatrix::inv: zero radius");
  return (1.0 / (znorm * znorm)) * transpose(m);
}

RMatrix r_matrix(const Vector& z) {
  const SphericalCoords sc = spherical_coordinates(z);
  RMatrix out;
  out.m = sc.r * rotation_from_angles(sc.angles);
  out.znorm = sc.r;
  return out;
}

TwoLayerParams apply_nonlinear_action(const Matrix& u, const Matrix& v,
                                      const Vector& x, const Matrix& g,
                                      const Activation& act) {
  if (v.cols() != x.size())
    throw ShapeError("apply_nonlinear_action: anchor length mismatch");
  if (g.rows() != v.rows() || g.cols() != v.rows())
    throw ShapeError("apply_nonlinear_action: group element width mismatch");
  if (u.cols() != v.rows())
    throw ShapeError("apply_nonlinear_action: U/V hidden width mismatch");
  if (is_identity(g)) return {u, v};

  const Vector vx = matvec(v, x);
  const Vector s_vx = apply_act(act, vx);
  check_anchor(act, vx, s_vx, "apply_nonlinear_action");
  const Vector gvx = matvec(g, vx);
  const Vector s_gvx = apply_act(act, gvx);
  check_anchor(act, gvx, s_gvx, "apply_nonlinear_action");

  const RMatrix r_old = r_matrix(s_vx);
  const RMatrix r_new = r_matrix(s_gvx);
  TwoLayerParams out;
  out.u = matmul(u, matmul(r_old.m, r_new.inv()));
  out.v = matmul(g, v);
  return out;
}

MlpParams apply_nonlinear_action_deep(const MlpParams& p,
                                      const std::vector<Activation>& acts,
                                      const Vector& x,
                                      const HiddenGroupElement& g) {
  validate(p);
  const std::size_t L = p.weights.size();
  if (g.gs.size() != L - 1)
    throw ShapeError("apply_nonlinear_action_deep: one element per hidden layer");
  if (acts.size() != L)
    throw ShapeError("apply_nonlinear_action_deep: one activation per layer");

  Matrix xcol(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) xcol(i, 0) = x[i];
  const ForwardTrace trace = forward(p, acts, xcol);

  MlpParams out = p;
  for (std::size_t li = 0; li < L; ++li) {
    Matrix w = p.weights[li];
    if (li >= 1 && !is_identity(g.gs[li - 1])) {
      const Vector z_below = column(trace.pre[li - 1], 0);
      const Vector feat = column(trace.post[li - 1], 0);
      const Activation& below_act = acts[li - 1];
      check_anchor(below_act, z_below, feat, "apply_nonlinear_action_deep");
      const Vector gz = matvec(g.gs[li - 1], z_below);
      const Vector s_gz = apply_act(below_act, gz);
      check_anchor(below_act, gz, s_gz, "apply_nonlinear_action_deep");
      w = matmul(w, matmul(r_matrix(feat).m, r_matrix(s_gz).inv()));
    }
    if (li + 1 < L) w = matmul(g.gs[li], w);
    out.weights[li] = std::move(w);
    if (p.biases && li + 1 < L)
      (*out.biases)[li] = matvec(g.gs[li], (*p.biases)[li]);
  }
  return out;
}

Matrix equivariance_map_c(const Matrix& g, const Vector& z, const Activation& act) {
  if (g.rows() != z.size() || g.cols() != z.size())
    throw ShapeError("equivariance_map_c: dimension mismatch");
  const Vector sz = apply_act(act, z);
  check_anchor(act, z, sz, "equivariance_map_c");
  const Vector gz = matvec(g, z);
  const Vector s_gz = apply_act(act, gz);
  check_anchor(act, gz, s_gz, "equivariance_map_c");
  return matmul(r_matrix(s_gz).m, r_matrix(sz).inv());
}

double lipschitz_bound(const Matrix& u, const Matrix& v, const Vector& x,
                       const Matrix& g, const Activation& act, double eta) {
  const Vector vx = matvec(v, x);
  const Vector s_vx = apply_act(act, vx);
  check_anchor(act, vx, s_vx, "lipschitz_bound");
  const Vector gvx = matvec(g, vx);
  const Vector s_gvx = apply_act(act, gvx);
  check_anchor(act, gvx, s_gvx, "lipschitz_bound");
  return eta * operator_norm(u) * operator_norm(v) * norm(s_vx) *
         operator_norm(g) / norm(s_gvx);
}

}  // namespace noether
