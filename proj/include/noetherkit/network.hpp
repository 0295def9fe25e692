#pragma once

#include <optional>
#include <vector>

#include "noetherkit/linalg.hpp"

namespace noether {

/// Layer widths n_0 (input), n_1, ..., n_L (output).
using Widths = std::vector<std::size_t>;

enum class ActKind {
  Identity,
  LeakyReLU,         // slope s on the negative half-line; s=0 is plain ReLU
  Sigmoid,
  Tanh,
  HomogeneousPower,  // sign(z) |z|^alpha, positively homogeneous of degree alpha
  RadialRescale,     // z -> f(|z|) z on each column
  RowRadial,         // row -> f(|row|) row on each row
};

enum class RadialProfile {
  InverseSquare,  // f(r) = 1/r^2, singular at r = 0
  TanhOverR,      // f(r) = tanh(r)/r, smooth everywhere
};

/// Largest linear hidden-group class whose action the activation commutes
/// with (through the matching representation).
enum class EquivarianceClass { FullGL, PositiveDiagonal, Orthogonal, None };

struct Activation {
  ActKind kind = ActKind::Identity;
  double slope = 0.0;     // LeakyReLU only
  double alpha = 1.0;     // HomogeneousPower only
  RadialProfile profile = RadialProfile::TanhOverR;

  static Activation identity() { return {}; }
  static Activation leaky_relu(double s) { return {ActKind::LeakyReLU, s}; }
  static Activation relu() { return leaky_relu(0.0); }
  static Activation sigmoid() { return {ActKind::Sigmoid}; }
  static Activation tanh() { return {ActKind::Tanh}; }
  static Activation homogeneous_power(double a) {
    Activation act;
    act.kind = ActKind::HomogeneousPower;
    act.alpha = a;
    return act;
  }
  static Activation radial_rescale(RadialProfile p) {
    Activation act;
    act.kind = ActKind::RadialRescale;
    act.profile = p;
    return act;
  }
  static Activation row_radial(RadialProfile p) {
    Activation act;
    act.kind = ActKind::RowRadial;
    act.profile = p;
    return act;
  }

  EquivarianceClass equivariance_class() const;
  bool pointwise() const {
    return kind != ActKind::RadialRescale && kind != ActKind::RowRadial;
  }
  /// Fixes sigma(0) = 0, which the anchored nonlinear action's degeneracy
  /// checks care about.
  bool zero_at_zero() const {
    return kind != ActKind::Sigmoid;
  }

  double value(double z) const;  // pointwise kinds only
  double deriv(double z) const;  // pointwise kinds only; kink convention below
};

/// Radial profile value f(r) and the ratio f'(r)/r used by the Jacobian.
double radial_profile_value(RadialProfile p, double r);
double radial_profile_slope_over_r(RadialProfile p, double r);

/// Applies the activation to a matrix of pre-activations (columns are batch
/// samples). Pointwise kinds act entrywise; RadialRescale acts per column,
/// RowRadial per row. InverseSquare on a zero column/row is an error.
Matrix activation_apply(const Activation& act, const Matrix& z);

/// Entrywise derivative for pointwise kinds. Kink convention: the LeakyReLU
/// derivative at exactly 0 is the left slope s. Radial kinds are rejected;
/// use activation_jacobian_column for those.
Matrix activation_derivative(const Activation& act, const Matrix& z);

/// Full h x h Jacobian of a radial rescale at one column z:
/// f(r) I + (f'(r)/r) z z^T.
Matrix activation_jacobian_column(const Activation& act, const Vector& z);

struct MlpParams {
  Widths widths;
  std::vector<Matrix> weights;                      // weights[i]: n_{i+1} x n_i
  std::optional<std::vector<Vector>> biases;        // biases[i]: n_{i+1}

  std::size_t layers() const { return weights.size(); }
  static MlpParams zeros_like(const MlpParams& p);
};

/// Checks weight/bias shapes against widths; throws ShapeError on mismatch.
void validate(const MlpParams& p);

struct Batch {
  Matrix x;  // n_0 x k
  Matrix y;  // n_L x k
};

enum class LossConvention {
  Mean,  // (1/k) ||Y - F(X)||_F^2
  Half,  // (1/2) ||Y - F(X)||_F^2
};

struct ForwardTrace {
  std::vector<Matrix> pre;   // Z_i, i = 1..L
  std::vector<Matrix> post;  // sigma_i(Z_i)
  const Matrix& output() const { return post.back(); }
};

ForwardTrace forward(const MlpParams& p, const std::vector<Activation>& acts,
                     const Matrix& x);

double loss_mse(const MlpParams& p, const std::vector<Activation>& acts,
                const Batch& batch, LossConvention conv = LossConvention::Mean);

/// Analytic gradient (backprop); result has the same shapes as params.
MlpParams grad(const MlpParams& p, const std::vector<Activation>& acts,
               const Batch& batch, LossConvention conv = LossConvention::Mean);

/// Central-difference gradient, the oracle the analytic one is tested
/// against. step is absolute.
MlpParams grad_fd(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, double step = 1e-5,
                  LossConvention conv = LossConvention::Mean);

/// Gradient of the loss with respect to the input batch x (for
/// gradient-sign attacks).
Matrix grad_input(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, LossConvention conv = LossConvention::Mean);

// Flat parameter views used by flows, Hessians and rank computations. Order:
// weights row-major layer by layer, then biases layer by layer if present.
std::size_t flat_size(const MlpParams& p);
void to_flat(const MlpParams& p, std::vector<double>& out);
void from_flat(const std::vector<double>& flat, MlpParams& p);

}  // namespace noether
