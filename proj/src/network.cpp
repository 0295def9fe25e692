#include "noetherkit/network.hpp"

#include <cmath>

namespace noether {

EquivarianceClass Activation::equivariance_class() const {
  switch (kind) {
    case ActKind::Identity:
      return EquivarianceClass::FullGL;
    case ActKind::LeakyReLU:
    case ActKind::HomogeneousPower:
      return EquivarianceClass::PositiveDiagonal;
    case ActKind::RadialRescale:
    case ActKind::RowRadial:
      return EquivarianceClass::Orthogonal;
    case ActKind::Sigmoid:
    case ActKind::Tanh:
      return EquivarianceClass::None;
  }
  return EquivarianceClass::None;
}

double Activation::value(double z) const {
  switch (kind) {
    case ActKind::Identity:
      return z;
    case ActKind::LeakyReLU:
      return z > 0.0 ? z : slope * z;
    case ActKind::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case ActKind::Tanh:
      return std::tanh(z);
    case ActKind::HomogeneousPower:
      if (z == 0.0) return 0.0;
      return z > 0.0 ? std::pow(z, alpha) : -std::pow(-z, alpha);
    default:
      throw ShapeError("Activation::value: not a pointwise activation");
  }
}

double Activation::deriv(double z) const {
  switch (kind) {
    case ActKind::Identity:
      return 1.0;
    case ActKind::LeakyReLU:
      return z > 0.0 ? 1.0 : slope;  // kink convention: left slope at 0
    case ActKind::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case ActKind::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActKind::HomogeneousPower:
      if (z == 0.0) return alpha == 1.0 ? 1.0 : 0.0;
      return alpha * std::pow(std::fabs(z), alpha - 1.0);
    default:
      throw ShapeError("Activation::deriv: not a pointwise activation");
  }
}

double radial_profile_value(RadialProfile p, double r) {
  switch (p) {
    case RadialProfile::InverseSquare:
      if (r == 0.0) throw ShapeError("radial profile 1/r^2 is singular at r = 0");
      return 1.0 / (r * r);
    case RadialProfile::TanhOverR:
      if (r < 1e-4) return 1.0 - r * r / 3.0 + 2.0 * r * r * r * r / 15.0;
      return std::tanh(r) / r;
  }
  return 0.0;
}

double radial_profile_slope_over_r(RadialProfile p, double r) {
  switch (p) {
    case RadialProfile::InverseSquare:
      if (r == 0.0) throw ShapeError("radial profile 1/r^2 is singular at r = 0");
      return -2.0 / (r * r * r * r);
    case RadialProfile::TanhOverR: {
      if (r < 1e-4) return -2.0 / 3.0 + 8.0 * r * r / 15.0;
      const double t = std::tanh(r);
      const double sech2 = 1.0 - t * t;
      // f'(r) = sech^2(r)/r - tanh(r)/r^2
      return sech2 / (r * r) - t / (r * r * r);
    }
  }
  return 0.0;
}

Matrix activation_apply(const Activation& act, const Matrix& z) {
  Matrix out = z;
  switch (act.kind) {
    case ActKind::RadialRescale:
      for (std::size_t j = 0; j < z.cols(); ++j) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) r2 += z(i, j) * z(i, j);
        const double f = radial_profile_value(act.profile, std::sqrt(r2));
        for (std::size_t i = 0; i < z.rows(); ++i) out(i, j) = f * z(i, j);
      }
      return out;
    case ActKind::RowRadial:
      for (std::size_t i = 0; i < z.rows(); ++i) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) r2 += z(i, j) * z(i, j);
        const double f = radial_profile_value(act.profile, std::sqrt(r2));
        for (std::size_t j = 0; j < z.cols(); ++j) out(i, j) = f * z(i, j);
      }
      return out;
    default:
      for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = act.value(z.data()[i]);
      return out;
  }
}

Matrix activation_derivative(const Activation& act, const Matrix& z) {
  if (!act.pointwise())
    throw ShapeError(
        "activation_derivative: radial kinds have a full Jacobian; use "
        "activation_jacobian_column");
  Matrix out = z;
  for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = act.deriv(z.data()[i]);
  return out;
}

Matrix activation_jacobian_column(const Activation& act, const Vector& z) {
  if (act.pointwise())
    throw ShapeError("activation_jacobian_column: pointwise activation");
  const std::size_t h = z.size();
  const double r = norm(z);
  const double f = radial_profile_value(act.profile, r);
  const double sor = radial_profile_slope_over_r(act.profile, r);
  Matrix j(h, h);
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = 0; b < h; ++b) j(a, b) = sor * z[a] * z[b];
    j(a, a) += f;
  }
  return j;
}

MlpParams MlpParams::zeros_like(const MlpParams& p) {
  MlpParams z;
  z.widths = p.widths;
  for (const auto& w : p.weights) z.weights.emplace_back(w.rows(), w.cols());
  if (p.biases) {
    z.biases.emplace();
    for (const auto& b : *p.biases) z.biases->emplace_back(b.size());
  }
  return z;
}

void validate(const MlpParams& p) {
  if (p.widths.size() < 2) throw ShapeError("MlpParams: need at least two widths");
  if (p.weights.size() != p.widths.size() - 1)
    throw ShapeError("MlpParams: weight count does not match widths");
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (p.weights[i].rows() != p.widths[i + 1] || p.weights[i].cols() != p.widths[i])
      throw ShapeError("MlpParams: weight shape does not match widths");
  }
  if (p.biases) {
    if (p.biases->size() != p.weights.size())
      throw ShapeError("MlpParams: bias count does not match layers");
    for (std::size_t i = 0; i < p.biases->size(); ++i)
      if ((*p.biases)[i].size() != p.widths[i + 1])
        throw ShapeError("MlpParams: bias length does not match widths");
  }
}

namespace {

void add_bias_columns(Matrix& z, const Vector& b) {
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b[i];
}

void check_acts(const MlpParams& p, const std::vector<Activation>& acts) {
  if (acts.size() != p.weights.size())
    throw ShapeError("forward: one activation per layer required");
}

}  // namespace

ForwardTrace forward(const MlpParams& p, const std::vector<Activation>& acts,
                     const Matrix& x) {
  check_acts(p, acts);
  if (x.rows() != p.widths.front())
    throw ShapeError("forward: input rows do not match n_0");
  ForwardTrace t;
  Matrix a = x;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    Matrix z = matmul(p.weights[i], a);
    if (p.biases) add_bias_columns(z, (*p.biases)[i]);
    t.pre.push_back(z);
    t.post.push_back(activation_apply(acts[i], z));
    a = t.post.back();
  }
  return t;
}

double loss_mse(const MlpParams& p, const std::vector<Activation>& acts,
                const Batch& batch, LossConvention conv) {
  const ForwardTrace t = forward(p, acts, batch.x);
  const Matrix& out = t.output();
  if (!out.same_shape(batch.y)) throw ShapeError("loss_mse: target shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = batch.y.data()[i] - out.data()[i];
    s += r * r;
  }
  const double c = conv == LossConvention::Mean
                       ? 1.0 / static_cast<double>(batch.x.cols())
                       : 0.5;
  return c * s;
}

namespace {

/// Back-propagates dL/d(post) through one activation layer to dL/d(pre).
Matrix backprop_activation(const Activation& act, const Matrix& z,
                           const Matrix& upstream) {
  if (act.pointwise()) {
    Matrix dz = activation_derivative(act, z);
    for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] *= upstream.data()[i];
    return dz;
  }
  if (act.kind == ActKind::RadialRescale) {
    Matrix dz(z.rows(), z.cols());
    Vector col(z.rows());
    for (std::size_t j = 0; j < z.cols(); ++j) {
      for (std::size_t i = 0; i < z.rows(); ++i) col[i] = z(i, j);
      const Matrix jac = activation_jacobian_column(
          Activation::radial_rescale(act.profile), col);
      // Jacobian is symmetric, so J^T g = J g.
      for (std::size_t i = 0; i < z.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < z.rows(); ++k) s += jac(i, k) * upstream(k, j);
        dz(i, j) = s;
      }
    }
    return dz;
  }
  // RowRadial: same Jacobian structure along rows.
  Matrix dz(z.rows(), z.cols());
  Vector row(z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) row[j] = z(i, j);
    const Matrix jac =
        activation_jacobian_column(Activation::radial_rescale(act.profile), row);
    for (std::size_t j = 0; j < z.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) s += jac(j, k) * upstream(i, k);
      dz(i, j) = s;
    }
  }
  return dz;
}

}  // namespace

MlpParams grad(const MlpParams& p, const std::vector<Activation>& acts,
               const Batch& batch, LossConvention conv) {
  check_acts(p, acts);
  const ForwardTrace t = forward(p, acts, batch.x);
  const Matrix& out = t.output();
  if (!out.same_shape(batch.y)) throw ShapeError("grad: target shape mismatch");

  const double c = conv == LossConvention::Mean
                       ? 2.0 / static_cast<double>(batch.x.cols())
                       : 1.0;
  Matrix da(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    da.data()[i] = c * (out.data()[i] - batch.y.data()[i]);

  MlpParams g = MlpParams::zeros_like(p);
  const std::size_t L = p.weights.size();
  for (std::size_t li = L; li-- > 0;) {
    const Matrix dz = backprop_activation(acts[li], t.pre[li], da);
    const Matrix& below = li == 0 ? batch.x : t.post[li - 1];
    g.weights[li] = matmul(dz, transpose(below));
    if (p.biases) {
      Vector db(dz.rows());
      for (std::size_t i = 0; i < dz.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dz.cols(); ++j) s += dz(i, j);
        db[i] = s;
      }
      (*g.biases)[li] = db;
    }
    if (li > 0) da = matmul(transpose(p.weights[li]), dz);
  }
  return g;
}

Matrix grad_input(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, LossConvention conv) {
  check_acts(p, acts);
  const ForwardTrace t = forward(p, acts, batch.x);
  const Matrix& out = t.output();
  if (!out.same_shape(batch.y)) throw ShapeError("grad_input: target shape mismatch");
  const double c = conv == LossConvention::Mean
                       ? 2.0 / static_cast<double>(batch.x.cols())
                       : 1.0;
  Matrix da(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    da.data()[i] = c * (out.data()[i] - batch.y.data()[i]);
  for (std::size_t li = p.weights.size(); li-- > 0;) {
    const Matrix dz = backprop_activation(acts[li], t.pre[li], da);
    da = matmul(transpose(p.weights[li]), dz);
  }
  return da;
}

MlpParams grad_fd(const MlpParams& p, const std::vector<Activation>& acts,
                  const Batch& batch, double step, LossConvention conv) {
  std::vector<double> flat;
  to_flat(p, flat);
  MlpParams work = p;
  MlpParams g = MlpParams::zeros_like(p);
  std::vector<double> gflat(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + step;
    from_flat(flat, work);
    const double lp = loss_mse(work, acts, batch, conv);
    flat[i] = saved - step;
    from_flat(flat, work);
    const double lm = loss_mse(work, acts, batch, conv);
    flat[i] = saved;
    gflat[i] = (lp - lm) / (2.0 * step);
  }
  from_flat(flat, work);
  from_flat(gflat, g);
  return g;
}

std::size_t flat_size(const MlpParams& p) {
  std::size_t n = 0;
  for (const auto& w : p.weights) n += w.size();
  if (p.biases)
    for (const auto& b : *p.biases) n += b.size();
  return n;
}

void to_flat(const MlpParams& p, std::vector<double>& out) {
  out.clear();
  out.reserve(flat_size(p));
  for (const auto& w : p.weights)
    out.insert(out.end(), w.data(), w.data() + w.size());
  if (p.biases)
    for (const auto& b : *p.biases)
      out.insert(out.end(), b.data.begin(), b.data.end());
}

void from_flat(const std::vector<double>& flat, MlpParams& p) {
  if (flat.size() != flat_size(p))
    throw ShapeError("from_flat: length does not match parameter count");
  std::size_t off = 0;
  for (auto& w : p.weights) {
    std::copy(flat.begin() + off, flat.begin() + off + w.size(), w.data());
    off += w.size();
  }
  if (p.biases) {
    for (auto& b : *p.biases) {
      std::copy(flat.begin() + off, flat.begin() + off + b.size(), b.data.begin());
      off += b.size();
    }
  }
}

}  // namespace noether
