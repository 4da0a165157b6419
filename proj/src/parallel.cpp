#include "tsdq/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace tsdq {

namespace {
std::atomic<int> g_max_workers{1};
thread_local bool t_inside_parallel = false;
}  // namespace

void set_max_workers(int n) { g_max_workers.store(n < 1 ? 1 : n); }

int max_workers() { return g_max_workers.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = max_workers();
  if (n == 0) return;
  if (workers <= 1 || n == 1 || t_inside_parallel) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t n_threads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t]() {
      t_inside_parallel = true;
      // Contiguous block per thread; slot independence makes the partition
      // irrelevant to the result.
      const std::size_t lo = n * t / n_threads;
      const std::size_t hi = n * (t + 1) / n_threads;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace tsdq
