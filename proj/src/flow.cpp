#include "noetherkit/flow.hpp"

#include <algorithm>
#include <cmath>

namespace noether {

namespace {

double l2(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x * x;
  return std::sqrt(s);
}

std::vector<std::string> unique_names(const std::vector<QSpec>& specs) {
  std::vector<std::string> names;
  for (const auto& s : specs) {
    std::string candidate = s.name;
    int suffix = 2;
    while (std::find(names.begin(), names.end(), candidate) != names.end())
      candidate = s.name + "_" + std::to_string(suffix++);
    names.push_back(candidate);
  }
  return names;
}

struct QTracker {
  std::vector<Vector> q0;
  bool primed = false;

  void record(Trajectory& traj, const std::vector<Vector>& qs) {
    if (!primed) {
      q0 = qs;
      primed = true;
    }
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const Vector& q = qs[i];
      double value;
      if (q.size() == 1) {
        value = q[0];
      } else {
        value = norm(q);
      }
      const Vector diff = q - q0[i];
      traj.q_value[i].push_back(value);
      traj.q_drift[i].push_back(norm(diff) / (1.0 + norm(q0[i])));
    }
  }
};

double flat_grad_norm(const MlpParams& g) {
  double s = 0.0;
  for (const auto& w : g.weights) s += frobenius_dot(w, w);
  if (g.biases)
    for (const auto& b : *g.biases) s += dot(b, b);
  return std::sqrt(s);
}

}  // namespace

namespace {

/// Shared recording/stopping logic for the two network flow modes.
class NetworkFlowRun {
 public:
  NetworkFlowRun(const MlpParams& p0, const std::vector<Activation>& acts,
                 const Batch& batch, const FlowConfig& cfg)
      : acts_(acts), batch_(batch), cfg_(cfg) {
    result_.params = p0;
    result_.trajectory.q_names = unique_names(cfg.q_specs);
    result_.trajectory.q_value.resize(cfg.q_specs.size());
    result_.trajectory.q_drift.resize(cfg.q_specs.size());
  }

  /// Returns false when the run should stop (divergence or tolerance hit).
  bool observe(long step, bool force_record) {
    const double loss = loss_mse(result_.params, acts_, batch_, cfg_.convention);
    const MlpParams g = grad(result_.params, acts_, batch_, cfg_.convention);
    const double gnorm = flat_grad_norm(g);
    if (!std::isfinite(loss) || !std::isfinite(gnorm)) {
      result_.trajectory.diverged = true;
      if (have_finite_) result_.params = last_finite_;
      return false;
    }
    last_finite_ = result_.params;
    have_finite_ = true;
    last_grad_ = g;
    const bool stopping =
        gnorm <= cfg_.gtol || (cfg_.ltol > 0.0 && loss <= cfg_.ltol);
    if (force_record || stopping || step % cfg_.record_every == 0)
      record(step, loss, gnorm);
    return !stopping;
  }

  const MlpParams& last_grad() const { return last_grad_; }
  MlpFlowResult take() { return std::move(result_); }
  MlpParams& params() { return result_.params; }
  Trajectory& trajectory() { return result_.trajectory; }

 private:
  void record(long step, double loss, double gnorm) {
    Trajectory& t = result_.trajectory;
    if (!t.steps.empty() && t.steps.back() == step) return;
    t.steps.push_back(step);
    t.loss.push_back(loss);
    t.grad_norm.push_back(gnorm);
    std::vector<Vector> qs;
    qs.reserve(cfg_.q_specs.size());
    for (const auto& spec : cfg_.q_specs)
      qs.push_back(qspec_evaluate(spec, result_.params));
    tracker_.record(t, qs);
    if (cfg_.snapshots) {
      std::vector<double> flat;
      to_flat(result_.params, flat);
      t.snapshots.push_back(std::move(flat));
    }
  }

  const std::vector<Activation>& acts_;
  const Batch& batch_;
  const FlowConfig& cfg_;
  MlpFlowResult result_;
  MlpParams last_grad_;
  MlpParams last_finite_;
  bool have_finite_ = false;
  QTracker tracker_;
};

}  // namespace

MlpFlowResult run_gd(const MlpParams& p0, const std::vector<Activation>& acts,
                     const Batch& batch, const FlowConfig& cfg) {
  validate(p0);
  NetworkFlowRun run(p0, acts, batch, cfg);
  for (long step = 0; step < cfg.steps; ++step) {
    if (!run.observe(step, step == 0)) return run.take();
    const MlpParams& g = run.last_grad();
    MlpParams& p = run.params();
    for (std::size_t i = 0; i < p.weights.size(); ++i)
      p.weights[i] = p.weights[i] - cfg.eta * g.weights[i];
    if (p.biases)
      for (std::size_t i = 0; i < p.biases->size(); ++i)
        (*p.biases)[i] = (*p.biases)[i] - cfg.eta * (*g.biases)[i];
  }
  run.observe(cfg.steps, true);
  return run.take();
}

MlpFlowResult run_gf(const MlpParams& p0, const std::vector<Activation>& acts,
                     const Batch& batch, const FlowConfig& cfg) {
  validate(p0);
  NetworkFlowRun run(p0, acts, batch, cfg);

  MlpParams scratch = p0;
  auto rhs = [&](const std::vector<double>& state) {
    from_flat(state, scratch);
    const MlpParams g = grad(scratch, acts, batch, cfg.convention);
    std::vector<double> v;
    to_flat(g, v);
    for (double& x : v) x = -cfg.epsilon * x;
    return v;
  };

  std::vector<double> state;
  to_flat(p0, state);
  const double dt = cfg.dt;
  for (long step = 0; step < cfg.steps; ++step) {
    if (!run.observe(step, step == 0)) return run.take();
    const std::vector<double> k1 = rhs(state);
    std::vector<double> tmp(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + 0.5 * dt * k1[i];
    const std::vector<double> k2 = rhs(tmp);
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + 0.5 * dt * k2[i];
    const std::vector<double> k3 = rhs(tmp);
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + dt * k3[i];
    const std::vector<double> k4 = rhs(tmp);
    for (std::size_t i = 0; i < state.size(); ++i)
      state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    from_flat(state, run.params());
  }
  run.observe(cfg.steps, true);
  return run.take();
}

OdeFlowResult run_rk4_ode(const std::vector<double>& s0, const OdeSystem& sys,
                          double dt, long steps, long record_every, double ltol,
                          bool snapshots) {
  OdeFlowResult out;
  out.state = s0;
  Trajectory& t = out.trajectory;
  for (const auto& [name, fn] : sys.quantities) t.q_names.push_back(name);
  t.q_value.resize(sys.quantities.size());
  t.q_drift.resize(sys.quantities.size());
  QTracker tracker;

  auto observe = [&](long step) -> bool {
    const double loss = sys.loss(out.state);
    if (!std::isfinite(loss)) {
      t.diverged = true;
      return false;
    }
    const bool stopping = ltol > 0.0 && loss <= ltol;
    if (step % record_every == 0 || step == steps || stopping) {
      if (t.steps.empty() || t.steps.back() != step) {
        t.steps.push_back(step);
        t.loss.push_back(loss);
        t.grad_norm.push_back(l2(sys.rhs(out.state)));
        std::vector<Vector> qs;
        for (const auto& [name, fn] : sys.quantities) qs.push_back(fn(out.state));
        tracker.record(t, qs);
        if (snapshots) t.snapshots.push_back(out.state);
      }
    }
    return !stopping;
  };

  for (long step = 0; step < steps; ++step) {
    if (!observe(step)) return out;
    std::vector<double> tmp(out.state.size());
    const std::vector<double> k1 = sys.rhs(out.state);
    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = out.state[i] + 0.5 * dt * k1[i];
    const std::vector<double> k2 = sys.rhs(tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = out.state[i] + 0.5 * dt * k2[i];
    const std::vector<double> k3 = sys.rhs(tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = out.state[i] + dt * k3[i];
    const std::vector<double> k4 = sys.rhs(tmp);
    for (std::size_t i = 0; i < out.state.size(); ++i)
      out.state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  observe(steps);
  return out;
}

DeltaQ delta_q_identity(const Matrix& u, const Matrix& v, const Matrix& g_u,
                        const Matrix& g_v, double eta) {
  if (!u.same_shape(g_u) || !v.same_shape(g_v))
    throw ShapeError("delta_q_identity: gradient shapes must match the weights");
  const double gu2 = frobenius_dot(g_u, g_u);
  const double gv2 = frobenius_dot(g_v, g_v);
  return {eta * eta * (gu2 - gv2), eta * eta * (gu2 + gv2)};
}

Matrix hessian_fd(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, LossConvention conv, double step_scale) {
  validate(p);
  std::vector<double> theta;
  to_flat(p, theta);
  const std::size_t d = theta.size();
  if (d > 1000)
    throw ShapeError("hessian_fd: parameter count exceeds the 1000 cost guard");

  MlpParams work = p;
  auto eval = [&](std::vector<double>& flat) {
    from_flat(flat, work);
    return loss_mse(work, acts, batch, conv);
  };

  std::vector<double> h(d);
  for (std::size_t i = 0; i < d; ++i) h[i] = step_scale * (1.0 + std::fabs(theta[i]));

  Matrix hess(d, d);
  std::vector<double> flat = theta;
  const double l0 = eval(flat);
  for (std::size_t i = 0; i < d; ++i) {
    flat[i] = theta[i] + h[i];
    const double lp = eval(flat);
    flat[i] = theta[i] - h[i];
    const double lm = eval(flat);
    flat[i] = theta[i];
    hess(i, i) = (lp - 2.0 * l0 + lm) / (h[i] * h[i]);
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      flat[i] = theta[i] + h[i];
      flat[j] = theta[j] + h[j];
      const double lpp = eval(flat);
      flat[j] = theta[j] - h[j];
      const double lpm = eval(flat);
      flat[i] = theta[i] - h[i];
      flat[j] = theta[j] + h[j];
      const double lmp = eval(flat);
      flat[j] = theta[j] - h[j];
      const double lmm = eval(flat);
      flat[i] = theta[i];
      flat[j] = theta[j];
      const double val = (lpp - lpm - lmp + lmm) / (4.0 * h[i] * h[j]);
      hess(i, j) = val;
      hess(j, i) = val;
    }
  }
  // Symmetrization is a no-op for the mirrored fill above but kept so the
  // contract (a symmetric matrix) is explicit in one place.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (hess(i, j) + hess(j, i));
      hess(i, j) = s;
      hess(j, i) = s;
    }
  return hess;
}

HessianReport hessian_spectrum(const MlpParams& p,
                               const std::vector<Activation>& acts,
                               const Batch& batch, LossConvention conv,
                               double step_scale) {
  const Matrix h = hessian_fd(p, acts, batch, conv, step_scale);
  const EighResult eig = eigh_jacobi(h);
  HessianReport report;
  report.eigenvalues = eig.eigenvalues;
  for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
    if (std::fabs(report.eigenvalues[i]) <= report.near_zero_threshold)
      ++report.near_zero;
  }
  report.largest =
      report.eigenvalues.size() ? report.eigenvalues[report.eigenvalues.size() - 1] : 0.0;
  return report;
}

SpectralInit spectral_init(const Matrix& y, Rng& rng) {
  const SvdResult svd = svd_jacobi(y);
  const std::size_t r = std::min(y.rows(), y.cols());
  SpectralInit init;
  init.phi = Matrix(y.rows(), r);
  init.psi = Matrix(y.cols(), r);
  init.sigma_y = Vector(r);
  for (std::size_t j = 0; j < r; ++j) {
    init.sigma_y[j] = svd.sigma[j];
    for (std::size_t i = 0; i < y.rows(); ++i) init.phi(i, j) = svd.u(i, j);
    for (std::size_t i = 0; i < y.cols(); ++i) init.psi(i, j) = svd.v(i, j);
  }
  init.u_diag = Vector(r);
  init.v_diag = Vector(r);
  for (std::size_t j = 0; j < r; ++j) init.u_diag[j] = rng.uniform(0.1, 1.1);
  for (std::size_t j = 0; j < r; ++j) init.v_diag[j] = rng.uniform(0.1, 1.1);
  init.u0 = matmul(init.phi, Matrix::diag(init.u_diag));
  init.v0 = matmul(init.psi, Matrix::diag(init.v_diag));
  return init;
}

std::pair<Vector, Vector> radial_spectral_rhs(const Vector& u, const Vector& v,
                                              const Vector& sigma_y) {
  if (u.size() != v.size() || u.size() != sigma_y.size())
    throw ShapeError("radial_spectral_rhs: length mismatch");
  Vector du(u.size()), dv(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (v[i] == 0.0)
      throw ShapeError("radial_spectral_rhs: vbar crossed zero (reciprocal map)");
    const double gv = 1.0 / v[i];
    const double resid = sigma_y[i] - u[i] * gv;
    du[i] = resid * gv;
    dv[i] = -resid * u[i] * gv * gv;
  }
  return {du, dv};
}

}  // namespace noether
