#pragma once

#include <vector>

#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/symmetry.hpp"

namespace noether {

/// Raised when an anchored construction hits its degenerate locus
/// (feature vectors too close to zero for the rotation frames to exist).
class DegenerateAnchorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Radius and h-1 angles: z_i = r cos(a_i) prod_{k<i} sin(a_k), with the
/// convention a_h = 0. Leading angles lie in [0, pi]; the last carries sign.
struct SphericalCoords {
  double r = 0.0;
  Vector angles;
};

/// Angles recovered tail-first via atan2 on remaining-suffix norms. A zero
/// vector is an error; once a suffix norm drops below 1e-12 * r the remaining
/// angles are set to 0.
SphericalCoords spherical_coordinates(const Vector& z);

/// The (n+1) x (n+1) rotation with first column on the unit sphere at the
/// given angles: entries cos(b_{j-1}) (prod_{k=j}^{i-1} sin b_k) cos(b_i) for
/// j <= i, -sin(b_i) on the superdiagonal, 0 above it (b_0 = b_{n+1} = 0).
Matrix rotation_from_angles(const Vector& beta);

/// R_z = |z| * rotation_from_angles(angles(z)). First column equals z, the
/// inverse is R^T / |z|^2 (always taken that way, never by elimination), and
/// the operator norm is |z|.
struct RMatrix {
  Matrix m;
  double znorm = 0.0;

  Matrix inv() const;
};

RMatrix r_matrix(const Vector& z);

struct TwoLayerParams {
  Matrix u;
  Matrix v;
};

/// Anchored two-layer action (U, V) -> (U R_{sigma(Vx)} R_{sigma(gVx)}^{-1},
/// gV). Preserves the network output at the anchor x for any invertible g.
/// Degenerate anchors (||sigma(Vx)|| or ||sigma(gVx)|| <= 1e-10, and for
/// sigma(0) = 0 activations also ||Vx|| or ||gVx|| <= 1e-10) are an error.
/// g exactly the identity short-circuits to the input (unit axiom).
TwoLayerParams apply_nonlinear_action(const Matrix& u, const Matrix& v,
                                      const Vector& x, const Matrix& g,
                                      const Activation& act);

/// Deep version: W_i -> g_i W_i R_{F_{i-1}} R_{sigma_{i-1}(g_{i-1} Z_{i-1})}^{-1},
/// b_i -> g_i b_i, with identity boundary factors; features transport as
/// Z_i(g.theta, x) = g_i Z_i(theta, x).
MlpParams apply_nonlinear_action_deep(const MlpParams& p,
                                      const std::vector<Activation>& acts,
                                      const Vector& x,
                                      const HiddenGroupElement& g);

/// Data-dependent equivariance map c(g, z) = R_{sigma(gz)} R_{sigma(z)}^{-1},
/// satisfying sigma(gz) = c(g, z) sigma(z) and the cocycle law.
Matrix equivariance_map_c(const Matrix& g, const Vector& z, const Activation& act);

/// Local Lipschitz bound of the transformed two-layer network around the
/// anchor: eta ||U|| ||V|| ||sigma(Vx)|| ||g|| / ||sigma(gVx)||, operator
/// norms by power iteration. eta is the activation's Lipschitz constant.
double lipschitz_bound(const Matrix& u, const Matrix& v, const Vector& x,
                       const Matrix& g, const Activation& act, double eta);

}  // namespace noether
