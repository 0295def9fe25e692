#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "noetherkit/linalg.hpp"
#include "noetherkit/rng.hpp"
#include "support.hpp"

using namespace noether;
using testsupport::rel_fro;

TEST_CASE("matmul identity and direct arithmetic") {
  Matrix a(2, 2);
  a(0, 0) = 1.0, a(0, 1) = 2.0, a(1, 0) = 3.0, a(1, 1) = 4.0;
  const Matrix ia = matmul(Matrix::identity(2), a);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(ia.data()[i] == a.data()[i]);

  Matrix b(2, 1);
  b(0, 0) = 5.0, b(1, 0) = 6.0;
  const Matrix ab = matmul(a, b);
  CHECK(ab(0, 0) == 17.0);
  CHECK(ab(1, 0) == 39.0);

  CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul against inverse and associativity") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = testsupport::random_well_conditioned(8, rng);
    const Matrix prod = matmul(a, inverse(a));
    CHECK(rel_fro(prod, Matrix::identity(8)) < 1e-10);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.gaussian_matrix(4, 6);
    const Matrix b = rng.gaussian_matrix(6, 3);
    const Matrix c = rng.gaussian_matrix(3, 5);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    CHECK(frobenius_norm(left - right) <= 1e-10 * (1.0 + frobenius_norm(right)));
  }
}

TEST_CASE("inverse basics") {
  const Matrix i3 = inverse(Matrix::identity(3));
  CHECK(rel_fro(i3, Matrix::identity(3)) == 0.0);

  const Matrix d = inverse(Matrix::diag(Vector{2.0, 4.0}));
  CHECK(d(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(d(0, 1) == 0.0);

  Rng rng(3);
  const Matrix a = testsupport::random_well_conditioned(8, rng);
  CHECK(frobenius_norm(matmul(a, inverse(a)) - Matrix::identity(8)) <= 1e-9 * 8);

  Matrix singular(2, 2);
  singular(0, 0) = 1.0, singular(0, 1) = 2.0;
  singular(1, 0) = 2.0, singular(1, 1) = 4.0;
  CHECK_THROWS_AS(inverse(singular), SingularMatrixError);
  try {
    inverse(singular);
  } catch (const SingularMatrixError& e) {
    CHECK(std::fabs(e.pivot) <= 1e-10);
  }
  CHECK_THROWS_AS(inverse(Matrix(2, 3)), ShapeError);
}

TEST_CASE("determinant") {
  CHECK(det(Matrix::identity(4)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(det(Matrix::diag(Vector{2.0, -3.0, 0.5})) ==
        doctest::Approx(-3.0).epsilon(1e-13));
  Matrix swap(2, 2, 0.0);
  swap(0, 1) = 1.0;
  swap(1, 0) = 1.0;
  CHECK(det(swap) == doctest::Approx(-1.0).epsilon(1e-14));
  Matrix a(2, 2);
  a(0, 0) = 3.0, a(0, 1) = 1.0, a(1, 0) = 2.0, a(1, 1) = 5.0;
  CHECK(det(a) == doctest::Approx(13.0).epsilon(1e-13));
}

TEST_CASE("eigh_jacobi small cases") {
  const EighResult d = eigh_jacobi(Matrix::diag(Vector{3.0, 1.0, 2.0}));
  CHECK(d.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d.eigenvalues[2] == doctest::Approx(3.0).epsilon(1e-12));

  Matrix offdiag(2, 2, 0.0);
  offdiag(0, 1) = 1.0;
  offdiag(1, 0) = 1.0;
  const EighResult e = eigh_jacobi(offdiag);
  CHECK(e.eigenvalues[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(eigh_jacobi(Matrix(2, 3)), ShapeError);
}

TEST_CASE("eigh_jacobi reconstruction on random symmetric input") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = testsupport::symmetrize(rng.gaussian_matrix(20, 20));
    const EighResult r = eigh_jacobi(a);
    // Ascending order.
    for (std::size_t i = 1; i < r.eigenvalues.size(); ++i)
      CHECK(r.eigenvalues[i - 1] <= r.eigenvalues[i]);
    // Orthonormal eigenvectors and reconstruction.
    const Matrix vtv = matmul(transpose(r.eigenvectors), r.eigenvectors);
    CHECK(frobenius_norm(vtv - Matrix::identity(20)) <= 1e-9);
    const Matrix recon = matmul(
        r.eigenvectors,
        matmul(Matrix::diag(r.eigenvalues), transpose(r.eigenvectors)));
    CHECK(frobenius_norm(recon - a) <= 1e-8 * (1.0 + frobenius_norm(a)));
  }
}

TEST_CASE("svd_jacobi small cases") {
  const SvdResult d = svd_jacobi(Matrix::diag(Vector{5.0, 3.0}));
  CHECK(d.sigma[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(d.sigma[1] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(rel_fro(d.u, Matrix::identity(2)) < 1e-12);
  CHECK(rel_fro(d.v, Matrix::identity(2)) < 1e-12);

  Matrix a(2, 2, 0.0);
  a(0, 1) = 2.0;
  a(1, 0) = 1.0;
  const SvdResult s = svd_jacobi(a);
  CHECK(s.sigma[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.sigma[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd_jacobi random rectangular, both orientations") {
  Rng rng(9);
  for (const auto [rows, cols] : {std::pair<std::size_t, std::size_t>{10, 5},
                                  std::pair<std::size_t, std::size_t>{4, 7}}) {
    const Matrix a = rng.gaussian_matrix(rows, cols);
    const SvdResult s = svd_jacobi(a);
    const std::size_t k = std::min(rows, cols);
    REQUIRE(s.sigma.size() == k);
    for (std::size_t i = 1; i < k; ++i) CHECK(s.sigma[i - 1] >= s.sigma[i]);
    for (std::size_t i = 0; i < k; ++i) CHECK(s.sigma[i] >= 0.0);
    CHECK(frobenius_norm(matmul(transpose(s.u), s.u) - Matrix::identity(k)) <= 1e-9);
    CHECK(frobenius_norm(matmul(transpose(s.v), s.v) - Matrix::identity(k)) <= 1e-9);
    const Matrix recon = matmul(s.u, matmul(Matrix::diag(s.sigma), transpose(s.v)));
    CHECK(frobenius_norm(recon - a) <= 1e-8 * frobenius_norm(a));
  }
}

TEST_CASE("svd singular values match sqrt of eigh eigenvalues of A^T A") {
  Rng rng(13);
  const Matrix a = rng.gaussian_matrix(9, 6);
  const SvdResult s = svd_jacobi(a);
  const EighResult e = eigh_jacobi(matmul(transpose(a), a));
  const std::size_t k = s.sigma.size();
  for (std::size_t i = 0; i < k; ++i) {
    const double from_eigh = std::sqrt(std::max(0.0, e.eigenvalues[k - 1 - i]));
    CHECK(std::fabs(s.sigma[i] - from_eigh) <= 1e-7 * (1.0 + from_eigh));
  }
}

TEST_CASE("svd of rank-deficient and zero matrices") {
  Matrix rank1(2, 2);
  rank1(0, 0) = 1.0, rank1(0, 1) = 2.0;
  rank1(1, 0) = 2.0, rank1(1, 1) = 4.0;
  const SvdResult s = svd_jacobi(rank1);
  CHECK(s.sigma[0] == doctest::Approx(5.0).epsilon(1e-10));
  CHECK(std::fabs(s.sigma[1]) <= 1e-9);

  const SvdResult z = svd_jacobi(Matrix(3, 2, 0.0));
  CHECK(z.sigma[0] == 0.0);
  CHECK(z.sigma[1] == 0.0);
}

TEST_CASE("pseudo_inverse satisfies the Moore-Penrose conditions") {
  Rng rng(21);
  for (const auto [rows, cols] : {std::pair<std::size_t, std::size_t>{6, 4},
                                  std::pair<std::size_t, std::size_t>{4, 6},
                                  std::pair<std::size_t, std::size_t>{5, 5}}) {
    const Matrix a = rng.gaussian_matrix(rows, cols);
    const Matrix p = pseudo_inverse(a);
    REQUIRE(p.rows() == cols);
    REQUIRE(p.cols() == rows);
    CHECK(rel_fro(matmul(a, matmul(p, a)), a) < 1e-9);
    CHECK(rel_fro(matmul(p, matmul(a, p)), p) < 1e-9);
    const Matrix ap = matmul(a, p);
    const Matrix pa = matmul(p, a);
    CHECK(frobenius_norm(ap - transpose(ap)) < 1e-9);
    CHECK(frobenius_norm(pa - transpose(pa)) < 1e-9);
  }
  // Coincides with the exact inverse on a well-conditioned square matrix.
  const Matrix a = testsupport::random_well_conditioned(5, rng);
  CHECK(rel_fro(pseudo_inverse(a), inverse(a)) < 1e-8);
}

TEST_CASE("operator_norm matches the largest singular value") {
  // Construct a matrix with a known, well-separated spectrum: with a gap
  // ratio of 0.4 the fixed 50-step power iteration converges to machine
  // precision, so the leading singular value is recovered essentially exactly.
  Rng rng(33);
  const Matrix phi = qr_orthonormal(rng.gaussian_matrix(7, 4));
  const Matrix psi = qr_orthonormal(rng.gaussian_matrix(4, 4));
  const Matrix s = Matrix::diag(Vector{5.0, 2.0, 1.0, 0.5});
  const Matrix a = matmul(phi, matmul(s, transpose(psi)));
  CHECK(operator_norm(a) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(operator_norm(Matrix::diag(Vector{1.0, -6.0, 2.0})) ==
        doctest::Approx(6.0).epsilon(1e-9));
  // A generic random matrix may have nearly degenerate leading singular
  // values; the iteration then converges from below at a geometric rate, so
  // only a looser one-sided agreement with the full SVD is guaranteed.
  const Matrix b = rng.gaussian_matrix(7, 4);
  const double want = svd_jacobi(b).sigma[0];
  const double got = operator_norm(b);
  CHECK(got <= want * (1.0 + 1e-9));
  CHECK(got >= want * (1.0 - 1e-3));
}

TEST_CASE("qr_orthonormal produces deterministic orthonormal frames") {
  Rng rng(44);
  const Matrix a = rng.gaussian_matrix(6, 6);
  const Matrix q = qr_orthonormal(a);
  CHECK(frobenius_norm(matmul(transpose(q), q) - Matrix::identity(6)) <= 1e-10);
  const Matrix q2 = qr_orthonormal(a);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q.data()[i] == q2.data()[i]);

  Matrix deficient(3, 3, 0.0);
  deficient(0, 0) = 1.0;
  deficient(1, 0) = 1.0;  // second and third columns are zero
  CHECK_THROWS_AS(qr_orthonormal(deficient), SingularMatrixError);
}

TEST_CASE("adaptive quadrature") {
  CHECK(integrate_adaptive([](double x) { return x; }, 0.0, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(integrate_adaptive([](double x) { return 1.0 + std::exp(x); }, 0.0, 1.0) ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-10));
  CHECK(integrate_adaptive([](double x) { return std::cos(x); }, 0.0, 0.0) == 0.0);
  // cos integrates to sin over a longer window.
  CHECK(integrate_adaptive([](double x) { return std::cos(x); }, 0.0, 2.0) ==
        doctest::Approx(std::sin(2.0)).epsilon(1e-10));
  // A non-integrable endpoint singularity exhausts the recursion depth: the
  // interval estimates never stabilise, which is the designed error signal.
  CHECK_THROWS_AS(integrate_adaptive([](double x) { return 1.0 / x; }, 0.0, 1.0,
                                     1e-9),
                  QuadratureError);
}

TEST_CASE("vector and matrix arithmetic plumbing") {
  const Vector v{1.0, 2.0, 3.0};
  CHECK(norm(v) == doctest::Approx(std::sqrt(14.0)).epsilon(1e-14));
  CHECK(dot(v, v) == doctest::Approx(14.0).epsilon(1e-14));

  Matrix a(2, 2);
  a(0, 0) = 1.0, a(0, 1) = -2.0, a(1, 0) = 0.5, a(1, 1) = 4.0;
  CHECK(trace(a) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(max_abs(a) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(frobenius_dot(a, a) == doctest::Approx(frobenius_norm(a) * frobenius_norm(a))
                                   .epsilon(1e-12));
  const Vector d = diagonal(a);
  CHECK(d[0] == 1.0);
  CHECK(d[1] == 4.0);

  const Vector mv = matvec(a, Vector{1.0, 1.0});
  CHECK(mv[0] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(mv[1] == doctest::Approx(4.5).epsilon(1e-14));
}
