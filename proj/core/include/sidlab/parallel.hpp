#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sidlab {

/// Work-queue over [0, n). Tasks must write results keyed by their own
/// index; aggregation then does not depend on completion order, which is
/// what keeps outputs byte-identical across worker counts.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr eptr;
  std::mutex emu;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (int k = 0; k < w; ++k) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lk(emu);
          if (!eptr) eptr = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (eptr) std::rethrow_exception(eptr);
}

}  // namespace sidlab
