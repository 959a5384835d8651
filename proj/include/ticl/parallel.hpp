#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace ticl {

/// Runs fn(0..n-1), chunked over `threads` std::threads when threads > 1.
/// Each index must be independent; callers merge results by index so the
/// outcome is identical to the serial order regardless of scheduling.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ticl
