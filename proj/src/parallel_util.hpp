#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace asmf::detail {

// Runs body(i) for i in [0, n) on up to `threads` workers with static
// interleaved assignment. Work items must write only to their own output
// slots; the first exception (lowest thread id wins the report) is rethrown
// on the caller thread after all workers join.
inline void parallel_for_index(long n, int threads,
                               const std::function<void(long)>& body) {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<long>(std::max(threads, 1), n));
  if (workers == 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (long i = t; i < n; i += workers) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace asmf::detail
