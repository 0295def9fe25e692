#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "noetherkit/linalg.hpp"

namespace noether {

/// splitmix64 step, used to decorrelate (seed, stream) pairs before feeding
/// the main engine.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d49bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic RNG: mt19937_64 engine with hand-rolled uniform/gaussian
/// conversions so streams are reproducible independent of the standard
/// library's distribution implementations. Independent streams for the same
/// seed are addressed by the stream index.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + stream * 0x3c6ef372fe94f82bULL);
    const std::uint64_t a = splitmix64(s);
    const std::uint64_t b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * (static_cast<double>(hi - lo) + 1.0));
  }

  /// Standard normal via Box-Muller; one spare cached per pair.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * gaussian();
    return m;
  }

  Vector gaussian_vector(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * gaussian();
    return v;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform() * static_cast<double>(i));
      std::swap(xs[i - 1], xs[j < i ? j : i - 1]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace noether
