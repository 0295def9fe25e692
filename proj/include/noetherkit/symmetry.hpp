#pragma once

#include <vector>

#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"

namespace noether {
class Rng;

enum class GroupKind { GeneralLinear, PositiveDiagonal, Orthogonal };

/// Membership test at tolerance tol (relative where a scale exists):
/// GeneralLinear needs |det| above tol; PositiveDiagonal needs off-diagonal
/// zeros and positive diagonal; Orthogonal needs ||g^T g - I|| <= tol.
bool is_group_member(GroupKind kind, const Matrix& g, double tol = 1e-10);

/// Whether the activation's equivariance class admits elements of this kind.
bool class_admits(EquivarianceClass cls, GroupKind kind);

/// Representation rule applied to every hidden layer; boundary layers always
/// carry the identity representation. Power(alpha) is meaningful for diagonal
/// group elements only: pi(g) = g^alpha entrywise on the diagonal.
struct PiSpec {
  enum class Rule { Identity, Power };
  Rule rule = Rule::Identity;
  double alpha = 1.0;

  static PiSpec identity() { return {}; }
  static PiSpec power(double a) { return {Rule::Power, a}; }

  Matrix apply(const Matrix& g) const;          // pi(g)
  Matrix apply_to_inverse(const Matrix& g) const;  // pi(g^{-1}) from g itself
  Matrix differential(const Matrix& m) const;   // dpi(M)
};

/// One invertible matrix per hidden layer; boundary factors are implicit
/// identities of the input/output widths.
struct HiddenGroupElement {
  std::vector<Matrix> gs;
  std::vector<GroupKind> kinds;

  static HiddenGroupElement single(Matrix g, GroupKind kind) {
    HiddenGroupElement e;
    e.gs.push_back(std::move(g));
    e.kinds.push_back(kind);
    return e;
  }
};

enum class LiePart { Symmetric, Antisymmetric, All };

/// One algebra element per hidden layer, with the symmetry part it was drawn
/// from (General when mixed).
struct HiddenLieElement {
  std::vector<Matrix> ms;
  LiePart part = LiePart::All;

  static HiddenLieElement single(Matrix m, LiePart part = LiePart::All) {
    HiddenLieElement e;
    e.ms.push_back(std::move(m));
    e.part = part;
    return e;
  }
};

struct LinearActionResult {
  MlpParams params;
  /// Set when some hidden layer's activation class does not admit the group
  /// kind acting there; the action is still applied.
  bool compatibility_warning = false;
};

/// W_i -> g_i W_i pi(g_{i-1}^{-1}), b_i -> g_i b_i, with identity boundary
/// factors g_0 and g_L. Singular g_i raises SingularMatrixError.
LinearActionResult apply_linear_action(const MlpParams& p,
                                       const std::vector<Activation>& acts,
                                       const HiddenGroupElement& g,
                                       const PiSpec& pi);

/// Infinitesimal version: W_i -> M_i W_i - W_i dpi(M_{i-1}), b_i -> M_i b_i,
/// with zero boundary generators.
MlpParams apply_infinitesimal(const MlpParams& p, const HiddenLieElement& m,
                              const PiSpec& pi);

/// Max over `samples` random vectors z of
/// ||sigma(g z) - pi(g) sigma(z)|| / (1 + ||sigma(g z)||).
double check_equivariance(const Activation& act, const Matrix& g,
                          const PiSpec& pi, int samples, Rng& rng);

/// |<grad L, M.theta>| / (||grad L|| ||M.theta|| + 1e-30).
double check_grad_orthogonality(const MlpParams& p,
                                const std::vector<Activation>& acts,
                                const Batch& batch, const HiddenLieElement& m,
                                const PiSpec& pi,
                                LossConvention conv = LossConvention::Mean);

/// Residual of the transpose transport identity
/// g^T . grad L(g.theta) = grad L(theta), normalized by 1 + ||grad L(theta)||.
double check_grad_equivariance(const MlpParams& p,
                               const std::vector<Activation>& acts,
                               const Batch& batch, const HiddenGroupElement& g,
                               const PiSpec& pi,
                               LossConvention conv = LossConvention::Mean);

/// Generic-orbit dimension for a two-layer (n -> h -> m) architecture.
std::size_t orbit_dimension_formula(EquivarianceClass cls, std::size_t n,
                                    std::size_t h, std::size_t m);

/// Numerical rank of the span of the flattened tangents M.theta over the
/// given basis; singular values above 1e-8 * sigma_max count.
std::size_t orbit_dimension_empirical(const MlpParams& p,
                                      const std::vector<HiddenLieElement>& basis,
                                      const PiSpec& pi);

/// Basis of the requested part of the algebra. GeneralLinear/All: the dim^2
/// elementary matrices; its symmetric part uses unit entries (E_kk, and
/// E_kl + E_lk for k < l); antisymmetric part is E_kl - E_lk for k < l.
/// PositiveDiagonal: the diagonal units E_kk. Orthogonal: antisymmetric only.
std::vector<Matrix> lie_basis(GroupKind kind, std::size_t dim, LiePart part);

/// GL: I + spread * Gaussian resampled until |det| > 1e-6 (100 draws budget);
/// PositiveDiagonal: diag(exp(spread * gaussian)); Orthogonal: QR factor of a
/// Gaussian matrix with positive R diagonal.
Matrix sample_group_element(GroupKind kind, std::size_t dim, double spread,
                            Rng& rng);

/// True when every weight matrix has smallest singular value above
/// rel * largest.
bool on_full_rank_locus(const MlpParams& p, double rel = 1e-6);

/// Convenience builder for the two-layer network x -> U sigma(V x):
/// U is m x h, V is h x n; widths become (n, h, m), no biases.
MlpParams two_layer_params(const Matrix& u, const Matrix& v);

}  // namespace noether
