#pragma once

#include <cstdint>
#include <functional>

namespace bigraph {

// Worker-thread cap: min(BIGRAPH_THREADS, hardware_concurrency), at least 1.
// Read once per process.
int max_threads();

namespace detail {
// Runs fn over [0,n) split into disjoint chunks on a persistent pool.
void pool_run(int64_t n, const std::function<void(int64_t, int64_t)>& fn);
bool in_parallel_region();
}  // namespace detail

// Static range split over the worker pool. Each index is processed by
// exactly one worker and the per-index work is order-independent, so results
// are bit-identical for any thread count. Nested calls degrade to serial.
template <typename F>
void parallel_for(int64_t n, F&& fn) {
  if (n <= 0) return;
  if (max_threads() <= 1 || n < 2 || detail::in_parallel_region()) {
    fn(static_cast<int64_t>(0), n);
    return;
  }
  detail::pool_run(n, [&fn](int64_t lo, int64_t hi) { fn(lo, hi); });
}

}  // namespace bigraph
