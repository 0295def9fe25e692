#include "noetherkit/symmetry.hpp"

#include <cmath>

namespace noether {

namespace {

bool is_diagonal(const Matrix& g, double tol) {
  double off = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      if (i != j) off = std::max(off, std::fabs(g(i, j)));
  return off <= tol * (1.0 + max_abs(g));
}

}  // namespace

bool is_group_member(GroupKind kind, const Matrix& g, double tol) {
  if (g.rows() != g.cols() || g.rows() == 0) return false;
  switch (kind) {
    case GroupKind::GeneralLinear:
      return std::fabs(det(g)) > tol;
    case GroupKind::PositiveDiagonal: {
      if (!is_diagonal(g, tol)) return false;
      for (std::size_t i = 0; i < g.rows(); ++i)
        if (g(i, i) <= 0.0) return false;
      return true;
    }
    case GroupKind::Orthogonal: {
      const Matrix gtg = matmul(transpose(g), g);
      return frobenius_norm(gtg - Matrix::identity(g.rows())) <= tol * g.rows();
    }
  }
  return false;
}

bool class_admits(EquivarianceClass cls, GroupKind kind) {
  switch (cls) {
    case EquivarianceClass::FullGL:
      return true;
    case EquivarianceClass::PositiveDiagonal:
      return kind == GroupKind::PositiveDiagonal;
    case EquivarianceClass::Orthogonal:
      return kind == GroupKind::Orthogonal;
    case EquivarianceClass::None:
      return false;
  }
  return false;
}

Matrix PiSpec::apply(const Matrix& g) const {
  if (rule == Rule::Identity) return g;
  if (!is_diagonal(g, 1e-12))
    throw ShapeError("PiSpec::apply: Power rule needs a diagonal element");
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) out(i, i) = std::pow(g(i, i), alpha);
  return out;
}

Matrix PiSpec::apply_to_inverse(const Matrix& g) const {
  if (rule == Rule::Identity) return inverse(g);
  if (!is_diagonal(g, 1e-12))
    throw ShapeError("PiSpec::apply_to_inverse: Power rule needs a diagonal element");
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (g(i, i) == 0.0)
      throw SingularMatrixError("PiSpec::apply_to_inverse: zero diagonal entry", 0.0);
    out(i, i) = std::pow(g(i, i), -alpha);
  }
  return out;
}

Matrix PiSpec::differential(const Matrix& m) const {
  if (rule == Rule::Identity) return m;
  return alpha * m;
}

namespace {

void check_element_shapes(const MlpParams& p, std::size_t n_elems,
                          const char* what) {
  if (n_elems != p.weights.size() - 1)
    throw ShapeError(std::string(what) + ": need one matrix per hidden layer");
}

}  // namespace

LinearActionResult apply_linear_action(const MlpParams& p,
                                       const std::vector<Activation>& acts,
                                       const HiddenGroupElement& g,
                                       const PiSpec& pi) {
  validate(p);
  check_element_shapes(p, g.gs.size(), "apply_linear_action");
  if (acts.size() != p.weights.size())
    throw ShapeError("apply_linear_action: one activation per layer required");
  const std::size_t L = p.weights.size();
  LinearActionResult out;
  out.params = p;
  for (std::size_t j = 0; j < g.gs.size(); ++j) {
    if (g.gs[j].rows() != p.widths[j + 1] || g.gs[j].cols() != p.widths[j + 1])
      throw ShapeError("apply_linear_action: group element width mismatch");
    if (!class_admits(acts[j].equivariance_class(), g.kinds[j]))
      out.compatibility_warning = true;
  }
  for (std::size_t li = 0; li < L; ++li) {
    Matrix w = p.weights[li];
    if (li + 1 < L) w = matmul(g.gs[li], w);
    if (li >= 1) w = matmul(w, pi.apply_to_inverse(g.gs[li - 1]));
    out.params.weights[li] = std::move(w);
    if (p.biases && li + 1 < L)
      (*out.params.biases)[li] = matvec(g.gs[li], (*p.biases)[li]);
  }
  return out;
}

MlpParams apply_infinitesimal(const MlpParams& p, const HiddenLieElement& m,
                              const PiSpec& pi) {
  validate(p);
  check_element_shapes(p, m.ms.size(), "apply_infinitesimal");
  const std::size_t L = p.weights.size();
  MlpParams out = MlpParams::zeros_like(p);
  for (std::size_t li = 0; li < L; ++li) {
    Matrix w(p.weights[li].rows(), p.weights[li].cols());
    if (li + 1 < L) w = matmul(m.ms[li], p.weights[li]);
    if (li >= 1) w = w - matmul(p.weights[li], pi.differential(m.ms[li - 1]));
    out.weights[li] = std::move(w);
    if (p.biases && li + 1 < L)
      (*out.biases)[li] = matvec(m.ms[li], (*p.biases)[li]);
  }
  return out;
}

double check_equivariance(const Activation& act, const Matrix& g,
                          const PiSpec& pi, int samples, Rng& rng) {
  const Matrix pig = pi.apply(g);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    Matrix z = rng.gaussian_matrix(g.cols(), 1);
    const Matrix lhs = activation_apply(act, matmul(g, z));
    const Matrix rhs = matmul(pig, activation_apply(act, z));
    worst = std::max(worst, frobenius_norm(lhs - rhs) / (1.0 + frobenius_norm(lhs)));
  }
  return worst;
}

namespace {

double flat_dot(const MlpParams& a, const MlpParams& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    s += frobenius_dot(a.weights[i], b.weights[i]);
  if (a.biases && b.biases)
    for (std::size_t i = 0; i < a.biases->size(); ++i)
      s += dot((*a.biases)[i], (*b.biases)[i]);
  return s;
}

double flat_norm(const MlpParams& a) { return std::sqrt(flat_dot(a, a)); }

}  // namespace

double check_grad_orthogonality(const MlpParams& p,
                                const std::vector<Activation>& acts,
                                const Batch& batch, const HiddenLieElement& m,
                                const PiSpec& pi, LossConvention conv) {
  const MlpParams g = grad(p, acts, batch, conv);
  const MlpParams tangent = apply_infinitesimal(p, m, pi);
  return std::fabs(flat_dot(g, tangent)) /
         (flat_norm(g) * flat_norm(tangent) + 1e-30);
}

double check_grad_equivariance(const MlpParams& p,
                               const std::vector<Activation>& acts,
                               const Batch& batch, const HiddenGroupElement& g,
                               const PiSpec& pi, LossConvention conv) {
  const MlpParams base_grad = grad(p, acts, batch, conv);
  const LinearActionResult moved = apply_linear_action(p, acts, g, pi);
  const MlpParams moved_grad = grad(moved.params, acts, batch, conv);

  // Adjoint of the linear action, applied to the gradient at g.theta:
  // G_i -> g_i^T G_i pi(g_{i-1}^{-1})^T, biases G_b -> g_i^T G_b.
  const std::size_t L = p.weights.size();
  MlpParams transported = moved_grad;
  for (std::size_t li = 0; li < L; ++li) {
    Matrix w = moved_grad.weights[li];
    if (li + 1 < L) w = matmul(transpose(g.gs[li]), w);
    if (li >= 1) w = matmul(w, transpose(pi.apply_to_inverse(g.gs[li - 1])));
    transported.weights[li] = std::move(w);
    if (moved_grad.biases && li + 1 < L)
      (*transported.biases)[li] =
          matvec(transpose(g.gs[li]), (*moved_grad.biases)[li]);
  }

  double resid2 = 0.0;
  for (std::size_t li = 0; li < L; ++li) {
    const Matrix d = transported.weights[li] - base_grad.weights[li];
    resid2 += frobenius_dot(d, d);
  }
  if (base_grad.biases)
    for (std::size_t li = 0; li < base_grad.biases->size(); ++li) {
      const Vector d = (*transported.biases)[li] - (*base_grad.biases)[li];
      resid2 += dot(d, d);
    }
  return std::sqrt(resid2) / (1.0 + flat_norm(base_grad));
}

std::size_t orbit_dimension_formula(EquivarianceClass cls, std::size_t n,
                                    std::size_t h, std::size_t m) {
  const auto choose2 = [](std::size_t x) { return x < 2 ? 0 : x * (x - 1) / 2; };
  const std::size_t mx = std::max(n, m);
  switch (cls) {
    case EquivarianceClass::FullGL: {
      const std::size_t over_n = h > n ? h - n : 0;
      const std::size_t over_m = h > m ? h - m : 0;
      return h * h - over_n * over_m;
    }
    case EquivarianceClass::PositiveDiagonal:
      // The diagonal stabilizer of a point with no zero U-column and no zero
      // V-row is trivial, so a generic orbit has the full group dimension in
      // both width regimes (they agree at h = max(n,m)).
      return h;
    case EquivarianceClass::Orthogonal: {
      // A generic point pins the span of the n + m anchor vectors; the
      // stabilizer is the orthogonal group of the complement.
      const std::size_t rest = h > n + m ? h - (n + m) : 0;
      (void)mx;
      return choose2(h) - choose2(rest);
    }
    case EquivarianceClass::None:
      return 0;
  }
  return 0;
}

std::size_t orbit_dimension_empirical(const MlpParams& p,
                                      const std::vector<HiddenLieElement>& basis,
                                      const PiSpec& pi) {
  if (basis.empty()) return 0;
  const std::size_t d = flat_size(p);
  Matrix tangents(d, basis.size());
  std::vector<double> flat;
  for (std::size_t c = 0; c < basis.size(); ++c) {
    const MlpParams t = apply_infinitesimal(p, basis[c], pi);
    to_flat(t, flat);
    for (std::size_t r = 0; r < d; ++r) tangents(r, c) = flat[r];
  }
  const SvdResult s = svd_jacobi(tangents);
  const double cutoff = 1e-8 * (s.sigma.size() ? s.sigma[0] : 0.0);
  std::size_t rank = 0;
  for (std::size_t i = 0; i < s.sigma.size(); ++i)
    if (s.sigma[i] > cutoff && s.sigma[i] > 0.0) ++rank;
  return rank;
}

std::vector<Matrix> lie_basis(GroupKind kind, std::size_t dim, LiePart part) {
  std::vector<Matrix> out;
  auto unit = [&](std::size_t r, std::size_t c) {
    Matrix m(dim, dim);
    m(r, c) = 1.0;
    return m;
  };
  switch (kind) {
    case GroupKind::GeneralLinear:
      if (part == LiePart::All) {
        for (std::size_t r = 0; r < dim; ++r)
          for (std::size_t c = 0; c < dim; ++c) out.push_back(unit(r, c));
      } else if (part == LiePart::Symmetric) {
        for (std::size_t k = 0; k < dim; ++k) out.push_back(unit(k, k));
        for (std::size_t k = 0; k < dim; ++k)
          for (std::size_t l = k + 1; l < dim; ++l)
            out.push_back(unit(k, l) + unit(l, k));
      } else {
        for (std::size_t k = 0; k < dim; ++k)
          for (std::size_t l = k + 1; l < dim; ++l)
            out.push_back(unit(k, l) - unit(l, k));
      }
      return out;
    case GroupKind::PositiveDiagonal:
      if (part == LiePart::Antisymmetric) return out;  // empty: algebra is diagonal
      for (std::size_t k = 0; k < dim; ++k) out.push_back(unit(k, k));
      return out;
    case GroupKind::Orthogonal:
      if (part == LiePart::Symmetric) return out;  // empty: algebra is antisymmetric
      for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t l = k + 1; l < dim; ++l)
          out.push_back(unit(k, l) - unit(l, k));
      return out;
  }
  return out;
}

Matrix sample_group_element(GroupKind kind, std::size_t dim, double spread,
                            Rng& rng) {
  if (spread == 0.0) return Matrix::identity(dim);
  switch (kind) {
    case GroupKind::GeneralLinear: {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const Matrix g = Matrix::identity(dim) + rng.gaussian_matrix(dim, dim, spread);
        if (std::fabs(det(g)) > 1e-6) return g;
      }
      throw std::runtime_error(
          "sample_group_element: no invertible draw within budget");
    }
    case GroupKind::PositiveDiagonal: {
      Matrix g(dim, dim);
      for (std::size_t i = 0; i < dim; ++i) g(i, i) = std::exp(spread * rng.gaussian());
      return g;
    }
    case GroupKind::Orthogonal:
      return qr_orthonormal(rng.gaussian_matrix(dim, dim));
  }
  throw ShapeError("sample_group_element: unknown group kind");
}

bool on_full_rank_locus(const MlpParams& p, double rel) {
  for (const auto& w : p.weights) {
    const SvdResult s = svd_jacobi(w);
    const std::size_t r = s.sigma.size();
    if (r == 0) return false;
    if (s.sigma[r - 1] <= rel * s.sigma[0]) return false;
  }
  return true;
}

MlpParams two_layer_params(const Matrix& u, const Matrix& v) {
  if (u.cols() != v.rows())
    throw ShapeError("two_layer_params: hidden widths of U and V disagree");
  MlpParams p;
  p.widths = {v.cols(), v.rows(), u.rows()};
  p.weights = {v, u};
  return p;
}

}  // namespace noether
