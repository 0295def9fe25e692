#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "noetherkit/flow.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"
#include "noetherkit/serialization.hpp"

namespace noether {

/// A numbered study failed one of its preconditions at run time (e.g. a
/// training leg never reached the required gradient tolerance).
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One named boolean check, stored with the number it was computed from and
/// the threshold it was held to, so result files are self-describing.
struct Verdict {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string table;   // table the measurement came from
  std::string detail;  // comparison direction, units, caveats
};

struct ExperimentResult {
  std::string name;
  std::vector<Table> tables;
  std::vector<Verdict> verdicts;
  std::uint64_t seed = 0;
  nlohmann::json config_echo;  // the exact configuration the run used

  bool all_pass() const;
  const Table& table(const std::string& table_name) const;
};

nlohmann::json result_to_json(const ExperimentResult& r);

/// Writes <outdir>/<name>/tables/<table>.csv and <outdir>/<name>/result.json
/// (all atomically). Creates directories as needed.
void save_experiment_result(const std::string& outdir, const ExperimentResult& r);

///// Synthetic classification data: `classes` Gaussian blobs in R^dim with
/// centers of norm 2 and the given within-blob spread; labels round-robin,
/// targets one-hot.
struct BlobData {
  Batch batch;
  std::vector<std::size_t> labels;
};

/// Class centers, each of norm 2.
std::vector<Vector> make_blob_centers(std::size_t dim, std::size_t classes,
                                      Rng& rng);

/// Samples around fixed centers, so train/test/anchor splits share one
/// distribution when they share one center set.
BlobData sample_blobs(const std::vector<Vector>& centers, std::size_t count,
                      double spread, Rng& rng);

/// Centers and samples in one step (single-split convenience).
BlobData make_blobs(std::size_t dim, std::size_t classes, std::size_t count,
                    double spread, Rng& rng);

/// Distribution of the layer imbalance Q = Tr[U^T U - V V^T] under Xavier
/// initialization (U ~ N(0, 1/h) on m x h, V ~ N(0, 1/n) on h x n), for
/// which E[Q] = m - h. The halved convention Q/2 is reported alongside.
/// Verdict: sample mean within 4 standard errors of m - h.
ExperimentResult exp_q_init_distribution(std::size_t m, std::size_t h,
                                         std::size_t n, std::size_t samples,
                                         std::uint64_t seed);

/// Gradient flow on the ellipse loss L(w1, w2) = w1^2 + a w2^2, initialized
/// on the level set L = l0 at prescribed values of Q = w1^{2a} / w2^2.
/// Closed form: w1(t) = w1(0) e^{-2t}, w2(t) = w2(0) e^{-2at}. Verdicts:
/// RK4 matches the closed form to 1e-6; for a = 1 the loss curve is
/// Q-independent (spread <= 1e-9), for a != 1 it is not (spread > 1e-3).
ExperimentResult exp_ellipse(double a, const std::vector<double>& q_grid,
                             double l0, double dt, double t_final);

/// Convergence speed vs. initialization scale for the whitened two-layer
/// fit ||Y - U sigma(V)||^2 (X = I). dims = {n, h, m}. One trial per entry
/// of variance_grid (the common init variance of U and V); the elementwise
/// integral Q is recorded where the activation admits one. Verdict:
/// steps-to-threshold is not constant across the grid; the rank correlation
/// is recorded without asserting its sign.
ExperimentResult exp_convergence_elementwise(
    const Activation& act, const std::vector<double>& variance_grid, double eta,
    long steps, const Widths& dims, std::uint64_t seed,
    double loss_threshold = 1e-2);

/// Reduced per-index spectral flow at several conserved radii lambda
/// (ubar = vbar = sqrt(lambda/2) at t = 0, so every trial starts at
/// sigma_x = 1). Verdicts: |sigma_x(t) - sigma_y| stays within the
/// exponential envelope |sigma_x(0) - sigma_y| e^{-t/lambda} (+1e-6 slack),
/// and mean time-to-threshold is monotone non-decreasing in lambda.
ExperimentResult exp_radial_convergence(const std::vector<double>& lambda_grid,
                                        double dt, double t_final,
                                        const Vector& sigma_y,
                                        std::uint64_t seed,
                                        double gap_threshold = 1e-2);

/// Hessian spectra at trained minima vs. the conserved imbalance Q.
/// Panels: (a) scalar uv -> 1 problem per entry of q_grid, eigenvalues
/// checked against {0, 2 sqrt(Q^2+4)}; (b) linear net of widths
/// dims = {n, h, m}, near-zero count (|lambda| <= 1e-3) checked against the
/// flat-direction prediction h(n+m) - nm; (c) small linear nets across a
/// fixed Q grid, rank correlation of Q with the mean surviving eigenvalue;
/// (d) a tanh panel emitted as data without verdicts. eta/steps control the
/// scalar panel's training.
ExperimentResult exp_hessian_vs_q(const Widths& dims,
                                  const std::vector<double>& q_grid, double eta,
                                  long steps, std::uint64_t seed);

struct EnsembleConfig {
  std::size_t input_dim = 6;
  std::size_t classes = 4;
  std::size_t hidden = 16;
  std::size_t train_count = 256;
  std::size_t test_count = 256;
  std::size_t anchor_count = 64;   // held-out pool anchors are drawn from
  double blob_spread = 0.9;
  double slope = 0.1;              // base model's LeakyReLU slope
  long train_steps = 3000;
  double eta = 0.05;
  std::vector<double> epsilon_grid = {0.0, 0.01, 0.05, 0.1};
  std::size_t n_transforms = 16;
  std::vector<std::string> methods = {"group", "g_inv", "random", "shuffle",
                                      "perm_interp"};
  std::vector<double> attack_grid = {0.0, 0.1, 0.3, 0.5};
  std::uint64_t seed = 0;
};

/// Majority-vote ensembles built from one trained two-layer classifier by
/// sampling g = I + eps M and transforming (U, V) per method: "group"
/// (anchored nonlinear action), "g_inv" (U g^{-1}, g V), "random"
/// (U (I + eps D), g V) with diagonal D, "shuffle" (U shuffled-pi(g, H), g V)
/// with pi(g, H) = sigma(H) sigma(gH)^+ on the anchor pool, and
/// "perm_interp" (U A^{-1}, A V) with A = (I + (eps/2)(I + S)) / (1 + eps)
/// for a random permutation S. Clean and FGSM accuracy tables; verdicts:
/// eps = 0 transforms are bitwise the base model, the group method's clean
/// accuracy drop at the smallest positive eps is <= 1 percentage point and
/// not below any baseline, and anchor outputs are preserved to 1e-7.
ExperimentResult exp_ensemble(const EnsembleConfig& cfg);

/// Fast gradient sign attack x' = x + eps_atk * sign(grad_x L); sign(0) = 0.
Matrix fgsm_attack(const MlpParams& p, const std::vector<Activation>& acts,
                   const Matrix& x, const Matrix& y, double eps_atk,
                   LossConvention conv = LossConvention::Mean);

}  // namespace noether
