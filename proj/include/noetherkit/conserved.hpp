#pragma once

#include <string>
#include <vector>

#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/symmetry.hpp"

namespace noether {

/// <theta, M.theta> without any symmetry screening (a raw pairing; vanishes
/// identically for antisymmetric generators under the identity rule).
double infinitesimal_pairing(const MlpParams& p, const HiddenLieElement& m,
                             const PiSpec& pi);

/// Conserved pairing Q_M(theta) = <theta, M.theta>. Generators must be
/// symmetric within 1e-12 (relative); antisymmetric ones are rejected since
/// their pairing is degenerate (identically zero).
double q_m(const MlpParams& p, const HiddenLieElement& m, const PiSpec& pi);

/// Two-layer imbalance matrix V V^T - U^T U (h x h, every entry conserved
/// under gradient flow of a linear network).
Matrix q_imbalance_matrix(const Matrix& u, const Matrix& v);

/// diag(V V^T - alpha U^T U) for degree-alpha positively homogeneous hidden
/// activations.
Vector q_homogeneous_diag(const Matrix& u, const Matrix& v, double alpha);

/// Closed-form antiderivative F of sigma/sigma' for the supported
/// elementwise activations: Identity and LeakyReLU(s>0) give x^2/2, Sigmoid
/// gives x + e^x, Tanh gives cosh(2x)/4. Anything else is rejected.
double elementwise_antiderivative(const Activation& act, double x);

/// Q = (1/2) Tr[U^T U] - sum_{a,j} (F(V_aj) - F(x0)), conserved for
/// whitened-input flows of x -> U sigma(V x).
double q_elementwise_integral(const Matrix& u, const Matrix& v,
                              const Activation& act, double x0 = 0.0);

/// Rotational residual nu = V Vdot^T - Vdot V^T + U^T Udot - Udot^T U with
/// the gradient-flow velocities Udot = -G_U, Vdot = -G_V. Zero (to numerical
/// precision) when the hidden activation commutes with rotations.
Matrix angular_momentum_residual(const Matrix& u, const Matrix& v,
                                 const Matrix& g_u, const Matrix& g_v);

/// Per-index lambda_i = ubar_i^2 + vbar_i^2 of the reduced spectral state.
Vector q_radial_spectral(const Vector& u_diag, const Vector& v_diag);

/// Q = w1^(2a) / w2^2 on the two-parameter ellipse loss w1^2 + a w2^2.
double q_ellipse(const Vector& w, double a);

/// Normalization terms |f1(U0)| and |f2(V0)| captured at the start of a
/// flow, where f1 = (1/2) Tr[U^T U] and f2 is the activation integral term.
struct QBaseline {
  double f1_abs = 0.0;
  double f2_abs = 0.0;
};

QBaseline normalized_q_baseline(const Matrix& u0, const Matrix& v0,
                                const Activation& act, double x0 = 0.0);

/// Q-tilde = |f1(U) - f2(V)| / (|f1(U0)| + |f2(V0)|).
double normalized_q(const Matrix& u, const Matrix& v, const Activation& act,
                    double x0, const QBaseline& baseline);

/// Serializable description of a conserved quantity tracked along a flow.
struct QSpec {
  enum class Variant {
    ImbalanceMatrix,
    QM,
    HomogeneousDiag,
    ElementwiseIntegral,
    RadialSpectralLambda,  // reduced spectral flows only
    EllipseQ,              // ellipse toy flows only
  };

  Variant variant = Variant::ImbalanceMatrix;
  std::string name = "imbalance";
  std::size_t layer = 1;        // ImbalanceMatrix: 1-based hidden layer index
  HiddenLieElement generator;   // QM
  PiSpec pi;                    // QM
  Activation act;               // ElementwiseIntegral
  double x0 = 0.0;              // ElementwiseIntegral
  double alpha = 1.0;           // HomogeneousDiag
  double ellipse_a = 1.0;       // EllipseQ

  static QSpec imbalance(std::size_t layer = 1);
  static QSpec qm(HiddenLieElement m, PiSpec pi);
  static QSpec homogeneous_diag(double alpha);
  static QSpec elementwise_integral(Activation act, double x0 = 0.0);
  static QSpec radial_spectral_lambda();
  static QSpec ellipse(double a);
};

/// Evaluates a network-flavored QSpec on network parameters, flattened to a
/// vector of tracked components. Reduced-system variants are rejected here;
/// the reduced flow drivers evaluate them on their own state.
Vector qspec_evaluate(const QSpec& spec, const MlpParams& p);

}  // namespace noether
