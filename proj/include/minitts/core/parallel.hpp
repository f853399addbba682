#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace minitts {

// Runs fn(i) for i in [0, n) across up to max_threads workers with a static
// partition. Item work must be independent; callers that reduce results do so
// afterwards in item order, which keeps training bitwise reproducible no
// matter how many workers ran.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_threads = 0) {
  if (n <= 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  int workers = std::min(n, max_threads > 0 ? max_threads : hw);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace minitts
