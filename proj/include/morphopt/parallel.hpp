#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace morphopt {

/// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks,
/// one per worker, so each index is processed exactly once and results
/// written to disjoint slots are bit-identical for any worker count. The
/// first exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(used);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < used; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(n) * w / used);
    const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / used);
    pool.emplace_back([&, begin, end] {
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace morphopt
