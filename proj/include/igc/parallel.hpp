#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace igc {

// Engine parallelism cap: IGC_THREADS env var, default all cores.
inline int max_threads() {
  static const int cached = [] {
    if (const char* s = std::getenv("IGC_THREADS")) {
      int t = std::atoi(s);
      if (t >= 1) return t;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return cached;
}

// Splits [0, count) into contiguous ranges, one per worker. Each index is
// processed by exactly one worker and every per-index computation keeps its
// own sequential reduction order, so results do not depend on thread count.
inline void parallel_for(long long count, const std::function<void(long long, long long)>& body,
                         int threads = 0) {
  if (threads <= 0) threads = max_threads();
  if (count <= 0) return;
  if (threads > count) threads = static_cast<int>(count);
  if (threads == 1 || count < 256) {
    body(0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  long long chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    long long lo = t * chunk;
    long long hi = lo + chunk < count ? lo + chunk : count;
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace igc
