#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace noether {

/// Worker cap: NOETHERKIT_THREADS if set (>=1), else hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("NOETHERKIT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Runs fn(i) for i in [0, n). Each index must touch only its own output
/// slot; assembly order is then independent of scheduling, so results are
/// deterministic for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_cap(), n ? n : 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace noether
