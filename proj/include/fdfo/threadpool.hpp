#pragma once
// Deterministic data-parallel helper: splits [0, n) into contiguous blocks,
// one per worker. Each index writes only its own output slot, so results are
// identical for any thread count. Thread count from FDFO_THREADS (default:
// hardware concurrency, at least 1).

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fdfo {

inline int thread_count() {
  if (const char* env = std::getenv("FDFO_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Exceptions from workers are captured and the
// first one (by block order) is rethrown on the calling thread.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = std::min(thread_count(), n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errs(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    // Block w covers [w*n/workers, (w+1)*n/workers).
    int lo = static_cast<int>(static_cast<long long>(w) * n / workers);
    int hi = static_cast<int>(static_cast<long long>(w + 1) * n / workers);
    threads.emplace_back([lo, hi, w, &fn, &errs] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fdfo
