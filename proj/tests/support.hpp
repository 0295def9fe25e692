#pragma once

// Shared helpers for the test binaries: a matrix-exponential oracle
// (independent of the library's group-sampling code paths), relative-error
// helpers, and small random builders.

#include <cmath>
#include <cstddef>

#include "noetherkit/linalg.hpp"
#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"

namespace testsupport {

using noether::Matrix;
using noether::Vector;

/// exp(M) by scaling-and-squaring on a plain Taylor series; fine for the
/// small, moderate-norm matrices used in tests.
inline Matrix expm(const Matrix& m) {
  if (m.rows() != m.cols()) throw noether::ShapeError("expm: square input required");
  const std::size_t n = m.rows();
  int squarings = 0;
  double scale = noether::frobenius_norm(m);
  while (scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const double factor = std::ldexp(1.0, -squarings);
  Matrix t = factor * m;
  Matrix result = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 40; ++k) {
    term = (1.0 / double(k)) * noether::matmul(term, t);
    result = result + term;
    if (noether::frobenius_norm(term) < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) result = noether::matmul(result, result);
  return result;
}

inline double rel_diff(double got, double want) {
  return std::fabs(got - want) / (1.0 + std::fabs(want));
}

inline double rel_fro(const Matrix& got, const Matrix& want) {
  return noether::frobenius_norm(got - want) /
         (1.0 + noether::frobenius_norm(want));
}

inline Matrix symmetrize(const Matrix& a) {
  return 0.5 * (a + noether::transpose(a));
}

inline Matrix antisymmetrize(const Matrix& a) {
  return 0.5 * (a - noether::transpose(a));
}

/// Well-conditioned random square matrix: dominant diagonal plus noise.
inline Matrix random_well_conditioned(std::size_t n, noether::Rng& rng) {
  Matrix a = rng.gaussian_matrix(n, n, 0.3);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 3.0;
  return a;
}

}  // namespace testsupport
