// Activations, forward evaluation, losses, analytic gradients against the
// finite-difference oracle, and the flat parameter views.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"
#include "support.hpp"

using namespace noether;

namespace {

Matrix col(std::initializer_list<double> vals) {
  Matrix m(vals.size(), 1);
  std::size_t i = 0;
  for (double v : vals) m(i++, 0) = v;
  return m;
}

// Largest relative disagreement between two gradients, normalised by the
// overall gradient scale so tiny entries do not dominate.
double grad_rel_err(const MlpParams& a, const MlpParams& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    num = std::max(num, max_abs(a.weights[l] - b.weights[l]));
    den = std::max(den, max_abs(a.weights[l]));
  }
  if (a.biases) {
    for (std::size_t l = 0; l < a.biases->size(); ++l)
      for (std::size_t i = 0; i < (*a.biases)[l].size(); ++i) {
        num = std::max(num, std::fabs((*a.biases)[l][i] - (*b.biases)[l][i]));
        den = std::max(den, std::fabs((*a.biases)[l][i]));
      }
  }
  return num / (1.0 + den);
}

MlpParams random_params(const Widths& w, Rng& rng, double scale,
                        bool with_biases) {
  MlpParams p;
  p.widths = w;
  for (std::size_t i = 0; i + 1 < w.size(); ++i)
    p.weights.push_back(rng.gaussian_matrix(w[i + 1], w[i], scale));
  if (with_biases) {
    std::vector<Vector> bs;
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      bs.push_back(rng.gaussian_vector(w[i + 1], scale));
    p.biases = bs;
  }
  return p;
}

// Smallest |preactivation| across the trace; used to keep kink-sensitive
// property tests away from the non-differentiable locus.
double min_abs_preactivation(const MlpParams& p,
                             const std::vector<Activation>& acts,
                             const Matrix& x) {
  ForwardTrace t = forward(p, acts, x);
  double m = 1e300;
  for (const Matrix& z : t.pre)
    for (std::size_t i = 0; i < z.size(); ++i)
      m = std::min(m, std::fabs(z.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("pointwise activation values and derivatives") {
  const Activation id = Activation::identity();
  const Activation lr = Activation::leaky_relu(0.1);
  const Activation sg = Activation::sigmoid();
  const Activation th = Activation::tanh();
  const Activation hp = Activation::homogeneous_power(1.5);

  CHECK(id.value(3.75) == 3.75);
  CHECK(id.deriv(-2.0) == 1.0);

  // max(z,0) + s*min(z,0) with the kink derivative pinned to the left slope.
  CHECK(lr.value(-1.0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(lr.value(2.0) == 2.0);
  CHECK(lr.deriv(0.0) == 0.1);
  CHECK(lr.deriv(1e-9) == 1.0);
  CHECK(Activation::relu().value(-5.0) == 0.0);
  CHECK(Activation::relu().deriv(0.0) == 0.0);

  CHECK(sg.value(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sg.deriv(0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(th.value(0.7) == doctest::Approx(std::tanh(0.7)).epsilon(1e-15));
  CHECK(th.deriv(0.7) ==
        doctest::Approx(1.0 - std::tanh(0.7) * std::tanh(0.7)).epsilon(1e-13));

  // sign(z)|z|^alpha and its derivative alpha*|z|^(alpha-1).
  CHECK(hp.value(-4.0) == doctest::Approx(-std::pow(4.0, 1.5)).epsilon(1e-15));
  CHECK(hp.deriv(4.0) == doctest::Approx(1.5 * std::pow(4.0, 0.5)).epsilon(1e-15));

  // Derivatives agree with central differences away from kinks.
  Rng rng(7);
  for (const Activation& act : {lr, sg, th, hp}) {
    for (int i = 0; i < 200; ++i) {
      double z = rng.uniform(-3.0, 3.0);
      if (std::fabs(z) < 1e-2) z = 1.0 + z;  // stay off the kink/origin
      const double h = 1e-6;
      const double fd = (act.value(z + h) - act.value(z - h)) / (2.0 * h);
      CHECK(act.deriv(z) == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  const Activation rad = Activation::radial_rescale(RadialProfile::TanhOverR);
  CHECK_THROWS_AS(rad.value(1.0), ShapeError);
  CHECK_THROWS_AS(rad.deriv(1.0), ShapeError);
}

TEST_CASE("activation_apply on matrices") {
  const Activation lr = Activation::leaky_relu(0.1);
  Matrix z(2, 1);
  z(0, 0) = -1.0;
  z(1, 0) = 2.0;
  const Matrix out = activation_apply(lr, z);
  CHECK(out(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(out(1, 0) == 2.0);

  // Identity passes anything through untouched.
  Rng rng(11);
  const Matrix any = rng.gaussian_matrix(3, 4);
  const Matrix same = activation_apply(Activation::identity(), any);
  for (std::size_t i = 0; i < any.size(); ++i)
    CHECK(same.data()[i] == any.data()[i]);

  // Columnwise radial rescale with f(r) = 1/r^2: column (3,4) has r = 5.
  const Activation inv = Activation::radial_rescale(RadialProfile::InverseSquare);
  const Matrix got = activation_apply(inv, col({3.0, 4.0}));
  CHECK(got(0, 0) == doctest::Approx(3.0 / 25.0).epsilon(1e-15));
  CHECK(got(1, 0) == doctest::Approx(4.0 / 25.0).epsilon(1e-15));
  CHECK_THROWS_AS(activation_apply(inv, col({0.0, 0.0})), ShapeError);

  // Rowwise variant rescales each row by h(|row|).
  const Activation row = Activation::row_radial(RadialProfile::InverseSquare);
  Matrix w(1, 2);
  w(0, 0) = 3.0;
  w(0, 1) = 4.0;
  const Matrix wr = activation_apply(row, w);
  CHECK(wr(0, 0) == doctest::Approx(3.0 / 25.0).epsilon(1e-15));
  CHECK(wr(0, 1) == doctest::Approx(4.0 / 25.0).epsilon(1e-15));

  // tanh(r)/r is smooth through the origin.
  const Activation smooth = Activation::radial_rescale(RadialProfile::TanhOverR);
  const Matrix z0 = activation_apply(smooth, col({0.0, 0.0}));
  CHECK(z0(0, 0) == 0.0);
  CHECK(z0(1, 0) == 0.0);
}

TEST_CASE("homogeneity of the power activation") {
  Rng rng(13);
  for (double alpha : {0.5, 1.0, 1.7, 2.0, 3.0}) {
    const Activation act = Activation::homogeneous_power(alpha);
    for (int i = 0; i < 50; ++i) {
      const double z = rng.uniform(-4.0, 4.0);
      const double c = std::exp(rng.uniform(-2.0, 2.0));
      const double lhs = act.value(c * z);
      const double rhs = std::pow(c, alpha) * act.value(z);
      CHECK(std::fabs(lhs - rhs) <= 1e-12 * (1.0 + std::fabs(rhs)));
    }
  }
}

TEST_CASE("radial rescale commutes with orthogonal maps") {
  Rng rng(17);
  for (RadialProfile prof : {RadialProfile::TanhOverR, RadialProfile::InverseSquare}) {
    const Activation act = Activation::radial_rescale(prof);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t h = 4;
      const Matrix g = qr_orthonormal(rng.gaussian_matrix(h, h));
      Matrix z = rng.gaussian_matrix(h, 3);
      // Keep every column norm O(1) so the 1/r^2 profile stays well scaled.
      for (std::size_t j = 0; j < z.cols(); ++j)
        z(0, j) += z(0, j) >= 0.0 ? 2.0 : -2.0;
      const Matrix lhs = activation_apply(act, matmul(g, z));
      const Matrix rhs = matmul(g, activation_apply(act, z));
      CHECK(max_abs(lhs - rhs) <= 1e-10);
    }
  }
}

TEST_CASE("radial Jacobian matches finite differences") {
  Rng rng(19);
  for (RadialProfile prof : {RadialProfile::TanhOverR, RadialProfile::InverseSquare}) {
    const Activation act = Activation::radial_rescale(prof);
    for (int trial = 0; trial < 10; ++trial) {
      Vector z = rng.gaussian_vector(5);
      z[0] += 2.0;  // keep the norm safely away from the 1/r^2 singularity
      const Matrix jac = activation_jacobian_column(act, z);
      Matrix zc(5, 1);
      for (std::size_t i = 0; i < 5; ++i) zc(i, 0) = z[i];
      const double h = 1e-6;
      for (std::size_t j = 0; j < 5; ++j) {
        Matrix zp = zc, zm = zc;
        zp(j, 0) += h;
        zm(j, 0) -= h;
        const Matrix fp = activation_apply(act, zp);
        const Matrix fm = activation_apply(act, zm);
        for (std::size_t i = 0; i < 5; ++i) {
          const double fd = (fp(i, 0) - fm(i, 0)) / (2.0 * h);
          CHECK(jac(i, j) == doctest::Approx(fd).epsilon(5e-5));
        }
      }
    }
  }
  CHECK_THROWS_AS(
      activation_jacobian_column(Activation::sigmoid(), Vector{1.0}), ShapeError);
  CHECK_THROWS_AS(activation_derivative(
                      Activation::radial_rescale(RadialProfile::TanhOverR),
                      Matrix::identity(2)),
                  ShapeError);
}

TEST_CASE("forward evaluation") {
  // One linear layer: W = [[2]], x = [3] -> 6.
  MlpParams one;
  one.widths = {1, 1};
  one.weights.push_back(Matrix::diag(Vector{2.0}));
  const ForwardTrace t1 = forward(one, {Activation::identity()}, col({3.0}));
  CHECK(t1.output()(0, 0) == 6.0);
  CHECK(t1.pre.size() == 1);
  CHECK(t1.post.size() == 1);

  // Two layers with ReLU in between: U = [[1,1]], V = [[1],[-1]], x = [1].
  MlpParams two;
  two.widths = {1, 2, 1};
  Matrix v(2, 1);
  v(0, 0) = 1.0;
  v(1, 0) = -1.0;
  Matrix u(1, 2);
  u(0, 0) = 1.0;
  u(0, 1) = 1.0;
  two.weights = {v, u};
  const ForwardTrace t2 =
      forward(two, {Activation::relu(), Activation::identity()}, col({1.0}));
  CHECK(t2.post[0](0, 0) == 1.0);
  CHECK(t2.post[0](1, 0) == 0.0);
  CHECK(t2.output()(0, 0) == 1.0);

  // Zero weights give zero output for origin-fixing activations.
  MlpParams zero = MlpParams::zeros_like(two);
  const ForwardTrace t3 =
      forward(zero, {Activation::leaky_relu(0.3), Activation::identity()},
              col({1.0}));
  CHECK(t3.output()(0, 0) == 0.0);

  // The trace is a pure function of (params, x): recomputation is bitwise.
  Rng rng(23);
  const MlpParams p = random_params({3, 5, 4, 2}, rng, 0.7, true);
  const std::vector<Activation> acts = {Activation::tanh(), Activation::sigmoid(),
                                        Activation::identity()};
  const Matrix x = rng.gaussian_matrix(3, 6);
  const ForwardTrace a = forward(p, acts, x);
  const ForwardTrace b = forward(p, acts, x);
  for (std::size_t l = 0; l < a.pre.size(); ++l) {
    for (std::size_t i = 0; i < a.pre[l].size(); ++i)
      CHECK(a.pre[l].data()[i] == b.pre[l].data()[i]);
    for (std::size_t i = 0; i < a.post[l].size(); ++i)
      CHECK(a.post[l].data()[i] == b.post[l].data()[i]);
  }

  // Shape guards: wrong input rows and wrong activation count.
  CHECK_THROWS_AS(forward(p, acts, rng.gaussian_matrix(4, 6)), ShapeError);
  CHECK_THROWS_AS(forward(p, {Activation::identity()}, x), ShapeError);
}

TEST_CASE("validate rejects inconsistent parameter shapes") {
  Rng rng(29);
  MlpParams p = random_params({2, 3, 2}, rng, 1.0, true);
  CHECK_NOTHROW(validate(p));

  MlpParams bad_w = p;
  bad_w.weights[0] = rng.gaussian_matrix(3, 3);
  CHECK_THROWS_AS(validate(bad_w), ShapeError);

  MlpParams bad_count = p;
  bad_count.weights.pop_back();
  CHECK_THROWS_AS(validate(bad_count), ShapeError);

  MlpParams bad_b = p;
  (*bad_b.biases)[1] = rng.gaussian_vector(5);
  CHECK_THROWS_AS(validate(bad_b), ShapeError);

  MlpParams too_short;
  too_short.widths = {4};
  CHECK_THROWS_AS(validate(too_short), ShapeError);
}

TEST_CASE("mean and half loss conventions") {
  MlpParams p;
  p.widths = {1, 1};
  p.weights.push_back(Matrix(1, 1, 0.0));
  Batch b;
  b.x = col({1.0});
  b.y = col({2.0});
  const std::vector<Activation> acts = {Activation::identity()};
  CHECK(loss_mse(p, acts, b, LossConvention::Half) == doctest::Approx(2.0));
  CHECK(loss_mse(p, acts, b, LossConvention::Mean) == doctest::Approx(4.0));

  // Perfect fit is exactly zero.
  p.weights[0](0, 0) = 2.0;
  CHECK(loss_mse(p, acts, b, LossConvention::Mean) == 0.0);
  CHECK(loss_mse(p, acts, b, LossConvention::Half) == 0.0);

  // Mean convention divides by the sample count.
  Rng rng(31);
  const MlpParams q = random_params({2, 3, 2}, rng, 0.8, false);
  const std::vector<Activation> acts2 = {Activation::tanh(), Activation::identity()};
  Batch wide;
  wide.x = rng.gaussian_matrix(2, 8);
  wide.y = rng.gaussian_matrix(2, 8);
  const double mean = loss_mse(q, acts2, wide, LossConvention::Mean);
  const double half = loss_mse(q, acts2, wide, LossConvention::Half);
  CHECK(mean == doctest::Approx(2.0 * half / 8.0).epsilon(1e-14));
}

TEST_CASE("gradient at a perfect fit is zero and hand case matches") {
  // Scalar two-layer linear model, half convention: L = 1/2 (1 - uv)^2.
  auto scalar_params = [](double u, double v) {
    MlpParams p;
    p.widths = {1, 1, 1};
    p.weights = {Matrix::diag(Vector{v}), Matrix::diag(Vector{u})};
    return p;
  };
  const std::vector<Activation> lin = {Activation::identity(),
                                       Activation::identity()};
  Batch b;
  b.x = col({1.0});
  b.y = col({1.0});
  const double u = 1.7, v = -0.4;
  const MlpParams g =
      grad(scalar_params(u, v), lin, b, LossConvention::Half);
  CHECK(g.weights[1](0, 0) == doctest::Approx(-(1.0 - u * v) * v).epsilon(1e-14));
  CHECK(g.weights[0](0, 0) == doctest::Approx(-(1.0 - u * v) * u).epsilon(1e-14));

  const MlpParams g0 = grad(scalar_params(2.0, 0.5), lin, b, LossConvention::Half);
  CHECK(g0.weights[0](0, 0) == 0.0);
  CHECK(g0.weights[1](0, 0) == 0.0);
}

TEST_CASE("analytic gradients match the finite-difference oracle") {
  Rng rng(37);
  const std::vector<std::vector<Activation>> stacks = {
      {Activation::identity(), Activation::identity()},
      {Activation::leaky_relu(0.2), Activation::identity()},
      {Activation::sigmoid(), Activation::tanh()},
      {Activation::tanh(), Activation::sigmoid()},
      {Activation::homogeneous_power(2.0), Activation::identity()},
      {Activation::radial_rescale(RadialProfile::TanhOverR),
       Activation::identity()},
      {Activation::row_radial(RadialProfile::TanhOverR), Activation::identity()},
  };
  for (const auto& acts : stacks) {
    for (int trial = 0; trial < 50; ++trial) {
      MlpParams p;
      Batch b;
      // Resample until all preactivations are at least 1e-3 from the kink
      // locus so the derivative convention never decides the comparison.
      for (int attempt = 0; attempt < 100; ++attempt) {
        p = random_params({3, 4, 2}, rng, 0.9, trial % 2 == 0);
        b.x = rng.gaussian_matrix(3, 5);
        b.y = rng.gaussian_matrix(2, 5);
        if (min_abs_preactivation(p, acts, b.x) >= 1e-3) break;
      }
      const MlpParams an = grad(p, acts, b);
      const MlpParams fd = grad_fd(p, acts, b);
      CHECK(grad_rel_err(an, fd) <= 1e-5);
    }
  }

  // Three hidden layers with tanh, the deepest stack in regular use.
  for (int trial = 0; trial < 10; ++trial) {
    const MlpParams p = random_params({2, 4, 4, 3}, rng, 0.8, true);
    const std::vector<Activation> acts = {Activation::tanh(), Activation::tanh(),
                                          Activation::identity()};
    Batch b;
    b.x = rng.gaussian_matrix(2, 6);
    b.y = rng.gaussian_matrix(3, 6);
    const MlpParams an = grad(p, acts, b);
    const MlpParams fd = grad_fd(p, acts, b);
    CHECK(grad_rel_err(an, fd) <= 1e-6);
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(41);
  const MlpParams p = random_params({3, 5, 2}, rng, 0.8, false);
  const std::vector<Activation> acts = {Activation::tanh(), Activation::identity()};
  Batch b;
  b.x = rng.gaussian_matrix(3, 4);
  b.y = rng.gaussian_matrix(2, 4);
  const Matrix gx = grad_input(p, acts, b);
  const double h = 1e-6;
  for (std::size_t i = 0; i < b.x.rows(); ++i)
    for (std::size_t j = 0; j < b.x.cols(); ++j) {
      Batch bp = b, bm = b;
      bp.x(i, j) += h;
      bm.x(i, j) -= h;
      const double fd =
          (loss_mse(p, acts, bp) - loss_mse(p, acts, bm)) / (2.0 * h);
      CHECK(gx(i, j) == doctest::Approx(fd).epsilon(5e-6));
    }
}

TEST_CASE("flat parameter views round-trip bitwise") {
  Rng rng(43);
  for (bool with_biases : {false, true}) {
    const MlpParams p = random_params({3, 5, 4, 2}, rng, 1.3, with_biases);
    std::vector<double> flat;
    to_flat(p, flat);
    CHECK(flat.size() == flat_size(p));

    MlpParams q = MlpParams::zeros_like(p);
    from_flat(flat, q);
    for (std::size_t l = 0; l < p.weights.size(); ++l)
      for (std::size_t i = 0; i < p.weights[l].size(); ++i)
        CHECK(q.weights[l].data()[i] == p.weights[l].data()[i]);
    if (with_biases)
      for (std::size_t l = 0; l < p.biases->size(); ++l)
        for (std::size_t i = 0; i < (*p.biases)[l].size(); ++i)
          CHECK((*q.biases)[l][i] == (*p.biases)[l][i]);

    std::vector<double> wrong(flat.size() + 1, 0.0);
    CHECK_THROWS_AS(from_flat(wrong, q), ShapeError);
  }
}
