#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace thermofuse {

// Worker cap: THERMOFUSE_THREADS if set (values < 1 mean serial), otherwise
// hardware concurrency.
inline int worker_count() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("THERMOFUSE_THREADS")) {
      int v = std::atoi(env);
      if (v < 1) return 1;
      return v < hw ? v : hw;
    }
    return hw;
  }();
  return cached;
}

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// Runs f(i) for i in [0, n). Iterations are split into contiguous blocks, one
// per worker, so results written to disjoint output slots are identical for
// any worker count. Nested calls degrade to serial execution.
template <class F>
void parallel_for(std::int64_t n, F&& f) {
  if (n <= 0) return;
  const int workers = detail::in_parallel_region() ? 1 : worker_count();
  if (workers == 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  const int used = static_cast<int>(n < workers ? n : workers);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  for (int t = 0; t < used; ++t) {
    const std::int64_t lo = n * t / used;
    const std::int64_t hi = n * (t + 1) / used;
    pool.emplace_back([&, lo, hi] {
      detail::in_parallel_region() = true;
      try {
        for (std::int64_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
      detail::in_parallel_region() = false;
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace thermofuse
