#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "noetherkit/conserved.hpp"
#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"

namespace noether {

struct FlowConfig {
  enum class Mode { GradientDescent, GradientFlowRK4 };
  Mode mode = Mode::GradientDescent;
  double eta = 1e-2;      // GD step size
  double dt = 1e-3;       // RK4 time step
  double epsilon = 1.0;   // flow speed in theta_dot = -epsilon grad L
  long steps = 1000;
  long record_every = 1;
  std::vector<QSpec> q_specs;
  double gtol = 1e-12;    // stop when ||grad|| drops below
  double ltol = 0.0;      // stop when loss drops below (0 disables)
  LossConvention convention = LossConvention::Mean;
  bool snapshots = false; // record flattened parameters at recorded steps
};

/// Recorded series, one entry per recorded step. Tracked quantities are kept
/// as a scalar view (the value itself, or the l2 norm for multi-component
/// quantities) plus the relative drift ||Q_t - Q_0|| / (1 + ||Q_0||).
struct Trajectory {
  std::vector<long> steps;
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<std::string> q_names;
  std::vector<std::vector<double>> q_value;  // [quantity][record]
  std::vector<std::vector<double>> q_drift;  // [quantity][record]
  std::vector<std::vector<double>> snapshots;
  bool diverged = false;
};

struct MlpFlowResult {
  Trajectory trajectory;
  MlpParams params;
};

/// Plain gradient descent. A non-finite loss flags divergence and stops with
/// the last finite parameters attached.
MlpFlowResult run_gd(const MlpParams& p0, const std::vector<Activation>& acts,
                     const Batch& batch, const FlowConfig& cfg);

/// Gradient flow integrated by classical RK4 on flattened parameters.
MlpFlowResult run_gf(const MlpParams& p0, const std::vector<Activation>& acts,
                     const Batch& batch, const FlowConfig& cfg);

/// Generic autonomous ODE with a recorded scalar objective and tracked
/// quantities, integrated by RK4. Used by the reduced (spectral/ellipse)
/// flows.
struct OdeSystem {
  std::function<std::vector<double>(const std::vector<double>&)> rhs;
  std::function<double(const std::vector<double>&)> loss;
  std::vector<std::pair<std::string, std::function<Vector(const std::vector<double>&)>>>
      quantities;
};

struct OdeFlowResult {
  Trajectory trajectory;
  std::vector<double> state;
};

OdeFlowResult run_rk4_ode(const std::vector<double>& s0, const OdeSystem& sys,
                          double dt, long steps, long record_every,
                          double ltol = 0.0, bool snapshots = false);

/// One-step discrete drift of Q = Tr[U^T U - V V^T] under gradient descent:
/// exact = eta^2 (||G_U||_F^2 - ||G_V||_F^2), always dominated by
/// bound = eta^2 (||G_U||_F^2 + ||G_V||_F^2) = eta^2 |dL/dt|.
struct DeltaQ {
  double exact = 0.0;
  double bound = 0.0;
};

DeltaQ delta_q_identity(const Matrix& u, const Matrix& v, const Matrix& g_u,
                        const Matrix& g_v, double eta);

/// Dense finite-difference Hessian on flattened parameters: central second
/// differences with per-coordinate step step_scale * (1 + |theta_i|), then
/// symmetrized. Parameter counts above 1000 are rejected (cost guard).
Matrix hessian_fd(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, LossConvention conv = LossConvention::Mean,
                  double step_scale = 1e-4);

struct HessianReport {
  Vector eigenvalues;             // ascending
  std::size_t near_zero = 0;      // |lambda| <= near_zero_threshold
  double largest = 0.0;
  double near_zero_threshold = 1e-3;
};

HessianReport hessian_spectrum(const MlpParams& p,
                               const std::vector<Activation>& acts,
                               const Batch& batch,
                               LossConvention conv = LossConvention::Mean,
                               double step_scale = 1e-4);

/// Spectrally aligned initialization for the low-rank factorization flows:
/// Y = Phi Sigma Psi^T (thin), U0 = Phi diag(u), V0 = Psi diag(v) with
/// diagonals drawn uniform from (0.1, 1.1).
struct SpectralInit {
  Matrix u0;       // m x r
  Matrix v0;       // n x r
  Matrix phi;      // m x r
  Matrix psi;      // n x r
  Vector sigma_y;  // r target singular values
  Vector u_diag;
  Vector v_diag;
};

SpectralInit spectral_init(const Matrix& y, Rng& rng);

/// Reduced gradient-flow velocity of the per-index spectral system with the
/// reciprocal row map (ubar_i estimates sigma^y_i through ubar_i / vbar_i):
/// udot_i = (s_i - u_i/v_i) / v_i, vdot_i = -(s_i - u_i/v_i) u_i / v_i^2.
std::pair<Vector, Vector> radial_spectral_rhs(const Vector& u, const Vector& v,
                                              const Vector& sigma_y);

}  // namespace noether
