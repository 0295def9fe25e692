// noetherkit command-line driver: symmetry checks, orbit dimensions, flows,
// conserved-quantity scans, and the named experiments. One JSON config per
// invocation (strict keys); --seed and --out are the only flag overrides.
// Exit codes: 0 pass, 1 verdict failure, 2 usage/config error.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noetherkit/conserved.hpp"
#include "noetherkit/experiments.hpp"
#include "noetherkit/flow.hpp"
#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/nonlinear.hpp"
#include "noetherkit/rng.hpp"
#include "noetherkit/serialization.hpp"
#include "noetherkit/symmetry.hpp"

namespace {

using namespace noether;
using nlohmann::json;

struct Flags {
  std::string config;
  std::string outdir = "out";
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

json load_config(const Flags& flags) {
  return parse_json(read_file(flags.config), flags.config);
}

const json* find_key(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double need_double(const json& j, const char* key, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v || !v->is_number())
    throw ConfigError(std::string(ctx) + ": missing or non-numeric key \"" + key + "\"");
  return v->get<double>();
}

double opt_double(const json& j, const char* key, double def, const char* ctx) {
  return find_key(j, key) ? need_double(j, key, ctx) : def;
}

std::size_t need_size(const json& j, const char* key, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v || !v->is_number_integer() || v->get<long long>() < 0)
    throw ConfigError(std::string(ctx) + ": key \"" + key +
                      "\" must be a non-negative integer");
  return std::size_t(v->get<long long>());
}

std::size_t opt_size(const json& j, const char* key, std::size_t def,
                     const char* ctx) {
  return find_key(j, key) ? need_size(j, key, ctx) : def;
}

long opt_long(const json& j, const char* key, long def, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v) return def;
  if (!v->is_number_integer())
    throw ConfigError(std::string(ctx) + ": key \"" + key + "\" must be an integer");
  return v->get<long>();
}

std::string need_string(const json& j, const char* key, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v || !v->is_string())
    throw ConfigError(std::string(ctx) + ": missing or non-string key \"" + key + "\"");
  return v->get<std::string>();
}

std::string opt_string(const json& j, const char* key, const std::string& def,
                       const char* ctx) {
  return find_key(j, key) ? need_string(j, key, ctx) : def;
}

std::vector<double> opt_grid(const json& j, const char* key,
                             std::vector<double> def, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v) return def;
  if (!v->is_array() || v->empty())
    throw ConfigError(std::string(ctx) + ": key \"" + key +
                      "\" must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number())
      throw ConfigError(std::string(ctx) + ": key \"" + key +
                        "\" must contain numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

Widths opt_dims(const json& j, const char* key, Widths def, const char* ctx) {
  const json* v = find_key(j, key);
  if (!v) return def;
  if (!v->is_array() || v->size() != 3)
    throw ConfigError(std::string(ctx) + ": key \"" + key +
                      "\" must be an array [n, h, m]");
  Widths out;
  for (const auto& e : *v) {
    if (!e.is_number_integer() || e.get<long long>() <= 0)
      throw ConfigError(std::string(ctx) + ": key \"" + key +
                        "\" entries must be positive integers");
    out.push_back(std::size_t(e.get<long long>()));
  }
  return out;
}

std::uint64_t resolve_seed(const json& j, const Flags& flags, const char* ctx) {
  if (flags.seed) return *flags.seed;
  const json* v = find_key(j, "seed");
  if (!v) return 0;
  if (!v->is_number_integer() || v->get<long long>() < 0)
    throw ConfigError(std::string(ctx) + ": key \"seed\" must be a non-negative integer");
  return v->get<std::uint64_t>();
}

GroupKind parse_group_kind(const std::string& s, const char* ctx) {
  if (s == "GeneralLinear") return GroupKind::GeneralLinear;
  if (s == "PositiveDiagonal") return GroupKind::PositiveDiagonal;
  if (s == "Orthogonal") return GroupKind::Orthogonal;
  throw ConfigError(std::string(ctx) + ": unknown group \"" + s +
                    "\" (GeneralLinear | PositiveDiagonal | Orthogonal)");
}

/// Representation rule implied by the hidden activation: homogeneous powers
/// carry pi(g) = g^alpha on diagonal elements, everything else the identity
/// rule.
PiSpec pi_for_activation(const Activation& act) {
  if (act.kind == ActKind::HomogeneousPower) return PiSpec::power(act.alpha);
  return PiSpec::identity();
}

Matrix sample_lie_element(GroupKind kind, std::size_t dim, Rng& rng) {
  const Matrix a = rng.gaussian_matrix(dim, dim);
  switch (kind) {
    case GroupKind::GeneralLinear:
      return a;
    case GroupKind::PositiveDiagonal: {
      Matrix d(dim, dim, 0.0);
      for (std::size_t i = 0; i < dim; ++i) d(i, i) = a(i, i);
      return d;
    }
    case GroupKind::Orthogonal:
      return 0.5 * (a - transpose(a));
  }
  throw ConfigError("unreachable group kind");
}

Matrix matrix_from_rows(const json& j, const char* ctx) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
    throw ConfigError(std::string(ctx) + ": expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix a(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError(std::string(ctx) + ": ragged row " + std::to_string(i));
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number())
        throw ConfigError(std::string(ctx) + ": non-numeric entry");
      a(i, k) = j[i][k].get<double>();
    }
  }
  return a;
}

void print_suite_row(const std::string& suite, std::size_t trials, double worst,
                     double tol, bool pass, bool ran) {
  std::cout << "  " << std::left << std::setw(18) << suite << std::right;
  if (!ran) {
    std::cout << "  (skipped: needs a two-layer model)\n";
    return;
  }
  std::cout << "  trials " << std::setw(4) << trials << "  max residual "
            << std::scientific << std::setprecision(3) << worst << "  tol "
            << std::setprecision(1) << tol << (pass ? "  PASS" : "  FAIL")
            << std::defaultfloat << "\n";
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

int run_check(const Flags& flags) {
  const json cfg = load_config(flags);
  require_keys(cfg, {"model", "group", "trials", "seed", "spread", "batch_count"},
               "check config");
  const ModelFile mf = load_model(need_string(cfg, "model", "check"));
  const GroupKind kind = parse_group_kind(need_string(cfg, "group", "check"), "check");
  const std::size_t trials = opt_size(cfg, "trials", 100, "check");
  const double spread = opt_double(cfg, "spread", 0.1, "check");
  const std::size_t batch_count = opt_size(cfg, "batch_count", 8, "check");
  const std::uint64_t seed = resolve_seed(cfg, flags, "check");
  if (trials == 0) throw ConfigError("check: trials must be positive");

  const MlpParams& p = mf.params;
  const std::vector<Activation>& acts = mf.acts;
  const std::size_t layers = p.layers();
  const PiSpec pi = pi_for_activation(acts[0]);

  Rng rng(seed, 42);
  Batch batch;
  batch.x = rng.gaussian_matrix(p.widths.front(), batch_count);
  batch.y = rng.gaussian_matrix(p.widths.back(), batch_count);
  const double base_loss = loss_mse(p, acts, batch);

  double worst_loss = 0.0, worst_equi = 0.0, worst_orth = 0.0, worst_anchor = 0.0;
  const bool two_layer = layers == 2;
  bool anchor_ran = two_layer;
  std::size_t anchor_trials = 0;

  for (std::size_t t = 0; t < trials; ++t) {
    HiddenGroupElement g;
    HiddenLieElement m;
    m.part = kind == GroupKind::Orthogonal ? LiePart::Antisymmetric : LiePart::All;
    for (std::size_t i = 1; i + 1 < p.widths.size(); ++i) {
      g.gs.push_back(sample_group_element(kind, p.widths[i], spread, rng));
      g.kinds.push_back(kind);
      m.ms.push_back(sample_lie_element(kind, p.widths[i], rng));
    }

    const LinearActionResult moved = apply_linear_action(p, acts, g, pi);
    const double moved_loss = loss_mse(moved.params, acts, batch);
    worst_loss = std::max(worst_loss, std::fabs(moved_loss - base_loss) /
                                          (1.0 + std::fabs(base_loss)));
    for (std::size_t i = 0; i + 1 < layers; ++i)
      worst_equi = std::max(worst_equi,
                            check_equivariance(acts[i], g.gs[i], pi, 8, rng));
    worst_orth = std::max(worst_orth,
                          check_grad_orthogonality(p, acts, batch, m, pi));

    if (two_layer) {
      const Matrix& v = p.weights[0];
      const Matrix& u = p.weights[1];
      bool placed = false;
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        const Vector x = rng.gaussian_vector(p.widths.front());
        try {
          const TwoLayerParams nl = apply_nonlinear_action(u, v, x, g.gs[0], acts[0]);
          Matrix xm(x.size(), 1);
          for (std::size_t i = 0; i < x.size(); ++i) xm(i, 0) = x[i];
          const Matrix before = forward(p, acts, xm).output();
          const Matrix after =
              forward(two_layer_params(nl.u, nl.v), acts, xm).output();
          worst_anchor = std::max(worst_anchor,
                                  frobenius_norm(after - before) /
                                      (1.0 + frobenius_norm(before)));
          placed = true;
          ++anchor_trials;
        } catch (const DegenerateAnchorError&) {
          continue;
        }
      }
    }
  }

  const bool pass_loss = worst_loss <= 1e-9;
  const bool pass_equi = worst_equi <= 1e-9;
  const bool pass_orth = worst_orth <= 1e-9;
  const bool pass_anchor = !anchor_ran || worst_anchor <= 1e-7;

  std::cout << "symmetry check: model with " << layers << " layers, group "
            << need_string(cfg, "group", "check") << ", " << trials << " trials\n";
  print_suite_row("loss-invariance", trials, worst_loss, 1e-9, pass_loss, true);
  print_suite_row("equivariance", trials, worst_equi, 1e-9, pass_equi, true);
  print_suite_row("orthogonality", trials, worst_orth, 1e-9, pass_orth, true);
  print_suite_row("anchor-invariance", anchor_trials, worst_anchor, 1e-7,
                  pass_anchor, anchor_ran);
  const bool all = pass_loss && pass_equi && pass_orth && pass_anchor;
  std::cout << (all ? "verdict: PASS" : "verdict: FAIL") << "\n";
  return all ? 0 : 1;
}

// ---------------------------------------------------------------------------
// orbit-dim
// ---------------------------------------------------------------------------

int run_orbit_dim(const Flags& flags) {
  const json cfg = load_config(flags);
  require_keys(cfg, {"n", "h", "m", "class", "trials", "seed"}, "orbit-dim config");
  const std::size_t n = need_size(cfg, "n", "orbit-dim");
  const std::size_t h = need_size(cfg, "h", "orbit-dim");
  const std::size_t m = need_size(cfg, "m", "orbit-dim");
  if (n == 0 || h == 0 || m == 0)
    throw ConfigError("orbit-dim: dims must be >= 1");
  const std::string cls_name = need_string(cfg, "class", "orbit-dim");
  const std::size_t trials = opt_size(cfg, "trials", 5, "orbit-dim");
  const std::uint64_t seed = resolve_seed(cfg, flags, "orbit-dim");

  EquivarianceClass cls;
  GroupKind kind;
  LiePart part;
  if (cls_name == "FullGL") {
    cls = EquivarianceClass::FullGL;
    kind = GroupKind::GeneralLinear;
    part = LiePart::All;
  } else if (cls_name == "PositiveDiagonal") {
    cls = EquivarianceClass::PositiveDiagonal;
    kind = GroupKind::PositiveDiagonal;
    part = LiePart::All;
  } else if (cls_name == "Orthogonal") {
    cls = EquivarianceClass::Orthogonal;
    kind = GroupKind::Orthogonal;
    part = LiePart::Antisymmetric;
  } else {
    throw ConfigError("orbit-dim: unknown class \"" + cls_name +
                      "\" (FullGL | PositiveDiagonal | Orthogonal)");
  }

  std::vector<HiddenLieElement> basis;
  for (Matrix& b : lie_basis(kind, h, part))
    basis.push_back(HiddenLieElement::single(std::move(b), part));
  const PiSpec pi = PiSpec::identity();
  const std::size_t formula = orbit_dimension_formula(cls, n, h, m);

  std::cout << "orbit dimension (" << n << ", " << h << ", " << m << ") class "
            << cls_name << "\n  formula: " << formula << "\n";
  bool all_agree = true;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, t);
    MlpParams p;
    bool sampled = false;
    for (int attempt = 0; attempt < 20; ++attempt) {
      p = two_layer_params(rng.gaussian_matrix(m, h), rng.gaussian_matrix(h, n));
      if (on_full_rank_locus(p)) {
        sampled = true;
        break;
      }
    }
    if (!sampled) throw ExperimentError("orbit-dim: resample budget (20) exhausted");
    const std::size_t rank = orbit_dimension_empirical(p, basis, pi);
    all_agree = all_agree && rank == formula;
    std::cout << "  trial " << t << ": empirical rank " << rank
              << (rank == formula ? "  (agrees)" : "  (MISMATCH)") << "\n";
  }
  std::cout << (all_agree ? "verdict: PASS" : "verdict: FAIL") << "\n";
  return all_agree ? 0 : 1;
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

Batch batch_from_config(const json& j, const MlpParams& p, std::uint64_t seed) {
  if (!j.is_object()) throw ConfigError("flow: \"data\" must be an object");
  const std::string kind = need_string(j, "kind", "flow data");
  Rng rng(seed, 99);
  Batch batch;
  if (kind == "identity") {
    require_keys(j, {"kind", "y_scale"}, "flow data (identity)");
    batch.x = Matrix::identity(p.widths.front());
    batch.y = rng.gaussian_matrix(p.widths.back(), p.widths.front(),
                                  opt_double(j, "y_scale", 1.0, "flow data"));
    return batch;
  }
  if (kind == "gaussian") {
    require_keys(j, {"kind", "count", "x_scale", "y_scale"}, "flow data (gaussian)");
    const std::size_t count = opt_size(j, "count", 8, "flow data");
    if (count == 0) throw ConfigError("flow data: count must be positive");
    batch.x = rng.gaussian_matrix(p.widths.front(), count,
                                  opt_double(j, "x_scale", 1.0, "flow data"));
    batch.y = rng.gaussian_matrix(p.widths.back(), count,
                                  opt_double(j, "y_scale", 1.0, "flow data"));
    return batch;
  }
  if (kind == "explicit") {
    require_keys(j, {"kind", "x", "y"}, "flow data (explicit)");
    const json* x = find_key(j, "x");
    const json* y = find_key(j, "y");
    if (!x || !y) throw ConfigError("flow data: explicit kind needs \"x\" and \"y\"");
    batch.x = matrix_from_rows(*x, "flow data x");
    batch.y = matrix_from_rows(*y, "flow data y");
    return batch;
  }
  throw ConfigError("flow data: unknown kind \"" + kind +
                    "\" (identity | gaussian | explicit)");
}

int run_flow(const Flags& flags) {
  const json cfg = load_config(flags);
  require_keys(cfg,
               {"model", "data", "mode", "eta", "dt", "epsilon", "steps",
                "record_every", "quantities", "gtol", "ltol", "convention",
                "seed"},
               "flow config");
  const ModelFile mf = load_model(need_string(cfg, "model", "flow"));
  const std::uint64_t seed = resolve_seed(cfg, flags, "flow");
  const json* data = find_key(cfg, "data");
  if (!data) throw ConfigError("flow: missing \"data\"");
  const Batch batch = batch_from_config(*data, mf.params, seed);

  FlowConfig fc;
  const std::string mode = opt_string(cfg, "mode", "gd", "flow");
  if (mode == "gd")
    fc.mode = FlowConfig::Mode::GradientDescent;
  else if (mode == "gf")
    fc.mode = FlowConfig::Mode::GradientFlowRK4;
  else
    throw ConfigError("flow: mode must be \"gd\" or \"gf\"");
  fc.eta = opt_double(cfg, "eta", fc.eta, "flow");
  fc.dt = opt_double(cfg, "dt", fc.dt, "flow");
  fc.epsilon = opt_double(cfg, "epsilon", fc.epsilon, "flow");
  fc.steps = opt_long(cfg, "steps", fc.steps, "flow");
  fc.record_every = opt_long(cfg, "record_every", fc.record_every, "flow");
  fc.gtol = opt_double(cfg, "gtol", fc.gtol, "flow");
  fc.ltol = opt_double(cfg, "ltol", fc.ltol, "flow");
  const std::string conv = opt_string(cfg, "convention", "mean", "flow");
  if (conv == "mean")
    fc.convention = LossConvention::Mean;
  else if (conv == "half")
    fc.convention = LossConvention::Half;
  else
    throw ConfigError("flow: convention must be \"mean\" or \"half\"");
  if (const json* q = find_key(cfg, "quantities")) {
    if (!q->is_array()) throw ConfigError("flow: \"quantities\" must be an array");
    for (const auto& e : *q)
      fc.q_specs.push_back(qspec_from_json(e, "flow quantities"));
  }

  const MlpFlowResult run = fc.mode == FlowConfig::Mode::GradientDescent
                                ? run_gd(mf.params, mf.acts, batch, fc)
                                : run_gf(mf.params, mf.acts, batch, fc);
  std::filesystem::create_directories(flags.outdir);
  const std::string csv_path =
      (std::filesystem::path(flags.outdir) / "trajectory.csv").string();
  save_trajectory_csv(csv_path, run.trajectory);

  const Trajectory& traj = run.trajectory;
  std::cout << "flow: " << traj.steps.size() << " records -> " << csv_path
            << "\n  final loss " << format_double(traj.loss.back())
            << ", grad norm " << format_double(traj.grad_norm.back()) << "\n";
  for (std::size_t i = 0; i < traj.q_names.size(); ++i)
    std::cout << "  " << traj.q_names[i] << ": relative drift "
              << format_double(traj.q_drift[i].back()) << "\n";
  if (traj.diverged) {
    std::cout << "verdict: FAIL (diverged)\n";
    return 1;
  }
  std::cout << "verdict: PASS\n";
  return 0;
}

// ---------------------------------------------------------------------------
// qscan
// ---------------------------------------------------------------------------

int run_qscan(const Flags& flags) {
  const json cfg = load_config(flags);
  require_keys(cfg, {"model", "quantities", "group", "spread", "trials", "seed"},
               "qscan config");
  const ModelFile mf = load_model(need_string(cfg, "model", "qscan"));
  const json* q = find_key(cfg, "quantities");
  if (!q || !q->is_array() || q->empty())
    throw ConfigError("qscan: \"quantities\" must be a non-empty array");
  std::vector<QSpec> specs;
  for (const auto& e : *q)
    specs.push_back(qspec_from_json(e, "qscan quantities"));
  const GroupKind kind =
      parse_group_kind(opt_string(cfg, "group", "GeneralLinear", "qscan"), "qscan");
  const double spread = opt_double(cfg, "spread", 0.1, "qscan");
  const std::size_t trials = opt_size(cfg, "trials", 3, "qscan");
  const std::uint64_t seed = resolve_seed(cfg, flags, "qscan");
  const PiSpec pi = pi_for_activation(mf.acts[0]);

  Table table{"qscan", {"quantity", "trial", "value_l2", "moved_l2", "max_shift"}, {}};
  std::cout << "qscan: " << specs.size() << " quantities, " << trials
            << " group moves\n";
  Rng rng(seed, 17);
  std::vector<Vector> base_values;
  for (const QSpec& spec : specs) base_values.push_back(qspec_evaluate(spec, mf.params));
  for (std::size_t t = 0; t < trials; ++t) {
    HiddenGroupElement g;
    for (std::size_t i = 1; i + 1 < mf.params.widths.size(); ++i) {
      g.gs.push_back(sample_group_element(kind, mf.params.widths[i], spread, rng));
      g.kinds.push_back(kind);
    }
    const LinearActionResult moved = apply_linear_action(mf.params, mf.acts, g, pi);
    for (std::size_t s = 0; s < specs.size(); ++s) {
      const Vector after = qspec_evaluate(specs[s], moved.params);
      double shift = 0.0;
      for (std::size_t i = 0; i < after.size(); ++i)
        shift = std::max(shift, std::fabs(after[i] - base_values[s][i]));
      table.add_row({specs[s].name, cell(t), cell(norm(base_values[s])),
                     cell(norm(after)), cell(shift)});
      std::cout << "  " << specs[s].name << " trial " << t << ": max shift "
                << format_double(shift) << "\n";
    }
  }
  std::filesystem::create_directories(flags.outdir);
  const std::string path =
      (std::filesystem::path(flags.outdir) / "qscan.csv").string();
  atomic_write_file(path, table.to_csv());
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

ExperimentResult dispatch_experiment(const std::string& name, const json& cfg,
                                     const Flags& flags) {
  const char* ctx = "experiment config";
  if (name == "q-init") {
    require_keys(cfg, {"m", "h", "n", "samples", "seed"}, ctx);
    return exp_q_init_distribution(need_size(cfg, "m", ctx), need_size(cfg, "h", ctx),
                                   need_size(cfg, "n", ctx),
                                   opt_size(cfg, "samples", 1000, ctx),
                                   resolve_seed(cfg, flags, ctx));
  }
  if (name == "ellipse") {
    require_keys(cfg, {"a", "q_grid", "l0", "dt", "t_final"}, ctx);
    return exp_ellipse(opt_double(cfg, "a", 1.0, ctx),
                       opt_grid(cfg, "q_grid", {0.5, 2.0, 8.0}, ctx),
                       opt_double(cfg, "l0", 1.0, ctx),
                       opt_double(cfg, "dt", 1e-3, ctx),
                       opt_double(cfg, "t_final", 1.0, ctx));
  }
  if (name == "convergence") {
    require_keys(cfg,
                 {"activation", "variance_grid", "eta", "steps", "dims", "seed",
                  "loss_threshold"},
                 ctx);
    const json* act = find_key(cfg, "activation");
    if (!act) throw ConfigError("experiment convergence: missing \"activation\"");
    return exp_convergence_elementwise(
        activation_from_json(*act, "experiment convergence activation"),
        opt_grid(cfg, "variance_grid", {0.05, 0.2, 0.8, 2.0}, ctx),
        opt_double(cfg, "eta", 0.005, ctx), opt_long(cfg, "steps", 20000, ctx),
        opt_dims(cfg, "dims", {4, 16, 3}, ctx), resolve_seed(cfg, flags, ctx),
        opt_double(cfg, "loss_threshold", 1e-2, ctx));
  }
  if (name == "radial") {
    require_keys(cfg,
                 {"lambda_grid", "dt", "t_final", "sigma_y", "seed",
                  "gap_threshold"},
                 ctx);
    const std::vector<double> sy = opt_grid(cfg, "sigma_y", {0.5, 1.5, 2.0}, ctx);
    Vector sigma_y(sy.size());
    for (std::size_t i = 0; i < sy.size(); ++i) sigma_y[i] = sy[i];
    return exp_radial_convergence(
        opt_grid(cfg, "lambda_grid", {0.5, 1.0, 2.0, 4.0}, ctx),
        opt_double(cfg, "dt", 1e-3, ctx), opt_double(cfg, "t_final", 20.0, ctx),
        sigma_y, resolve_seed(cfg, flags, ctx),
        opt_double(cfg, "gap_threshold", 1e-2, ctx));
  }
  if (name == "hessian") {
    require_keys(cfg, {"dims", "q_grid", "eta", "steps", "seed"}, ctx);
    return exp_hessian_vs_q(opt_dims(cfg, "dims", {10, 50, 5}, ctx),
                            opt_grid(cfg, "q_grid", {0.0, 1.0, 3.0}, ctx),
                            opt_double(cfg, "eta", 1e-3, ctx),
                            opt_long(cfg, "steps", 50000, ctx),
                            resolve_seed(cfg, flags, ctx));
  }
  if (name == "ensemble") {
    require_keys(cfg,
                 {"input_dim", "classes", "hidden", "train_count", "test_count",
                  "anchor_count", "blob_spread", "slope", "train_steps", "eta",
                  "epsilon_grid", "n_transforms", "methods", "attack_grid",
                  "seed"},
                 ctx);
    EnsembleConfig ec;
    ec.input_dim = opt_size(cfg, "input_dim", ec.input_dim, ctx);
    ec.classes = opt_size(cfg, "classes", ec.classes, ctx);
    ec.hidden = opt_size(cfg, "hidden", ec.hidden, ctx);
    ec.train_count = opt_size(cfg, "train_count", ec.train_count, ctx);
    ec.test_count = opt_size(cfg, "test_count", ec.test_count, ctx);
    ec.anchor_count = opt_size(cfg, "anchor_count", ec.anchor_count, ctx);
    ec.blob_spread = opt_double(cfg, "blob_spread", ec.blob_spread, ctx);
    ec.slope = opt_double(cfg, "slope", ec.slope, ctx);
    ec.train_steps = opt_long(cfg, "train_steps", ec.train_steps, ctx);
    ec.eta = opt_double(cfg, "eta", ec.eta, ctx);
    ec.epsilon_grid = opt_grid(cfg, "epsilon_grid", ec.epsilon_grid, ctx);
    ec.n_transforms = opt_size(cfg, "n_transforms", ec.n_transforms, ctx);
    if (const json* m = find_key(cfg, "methods")) {
      if (!m->is_array() || m->empty())
        throw ConfigError("experiment ensemble: \"methods\" must be a non-empty array");
      ec.methods.clear();
      for (const auto& e : *m) {
        if (!e.is_string())
          throw ConfigError("experiment ensemble: methods must be strings");
        ec.methods.push_back(e.get<std::string>());
      }
    }
    ec.attack_grid = opt_grid(cfg, "attack_grid", ec.attack_grid, ctx);
    ec.seed = resolve_seed(cfg, flags, ctx);
    return exp_ensemble(ec);
  }
  throw ConfigError("unknown experiment \"" + name +
                    "\" (q-init | ellipse | convergence | radial | hessian | "
                    "ensemble)");
}

int run_experiment(const std::string& name, const Flags& flags) {
  const json cfg = load_config(flags);
  ExperimentResult result = dispatch_experiment(name, cfg, flags);
  save_experiment_result(flags.outdir, result);
  std::cout << "experiment " << result.name << " -> "
            << (std::filesystem::path(flags.outdir) / result.name).string()
            << "\n";
  for (const auto& v : result.verdicts) {
    std::cout << "  " << (v.pass ? "PASS " : "FAIL ") << std::left
              << std::setw(28) << v.name << std::right << " measured "
              << format_double(v.measured) << "  threshold "
              << format_double(v.threshold) << "\n";
    if (flags.verbose) std::cout << "       " << v.detail << "\n";
  }
  const bool all = result.all_pass();
  std::cout << (all ? "verdict: PASS" : "verdict: FAIL") << "\n";
  return all ? 0 : 1;
}

void add_common_flags(CLI::App* sub, Flags& flags) {
  sub->add_option("--config", flags.config, "JSON config path")->required();
  sub->add_option("--seed", flags.seed, "override the config seed");
  sub->add_option("--out", flags.outdir, "output directory (default: out)");
  sub->add_flag("-v,--verbose", flags.verbose, "verbose output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noetherkit: parameter-space symmetries, conserved quantities, "
               "and flow experiments for small MLPs"};
  app.require_subcommand(1);

  Flags flags;
  std::string experiment_name;
  CLI::App* c_check = app.add_subcommand("check", "symmetry check suites on a model");
  CLI::App* c_orbit = app.add_subcommand("orbit-dim", "orbit dimension: formula vs rank");
  CLI::App* c_flow = app.add_subcommand("flow", "GD/GF run with quantity tracking");
  CLI::App* c_qscan = app.add_subcommand("qscan", "conserved quantities under group moves");
  CLI::App* c_ens = app.add_subcommand("ensemble", "transformed-model ensemble study");
  CLI::App* c_exp = app.add_subcommand("experiment", "run a named experiment");
  c_exp->add_option("name", experiment_name, "experiment name")->required();
  for (CLI::App* sub : {c_check, c_orbit, c_flow, c_qscan, c_ens, c_exp})
    add_common_flags(sub, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_check->parsed()) return run_check(flags);
    if (c_orbit->parsed()) return run_orbit_dim(flags);
    if (c_flow->parsed()) return run_flow(flags);
    if (c_qscan->parsed()) return run_qscan(flags);
    if (c_ens->parsed()) return run_experiment("ensemble", flags);
    if (c_exp->parsed()) return run_experiment(experiment_name, flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ExperimentError& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return 1;
  } catch (const SingularMatrixError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
