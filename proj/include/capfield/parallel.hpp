#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "capfield/common.hpp"

namespace capfield {

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). Work is split into contiguous index ranges, one per thread,
// so every i is processed exactly once no matter the worker count; callers
// writing only to slot i of preallocated storage get bit-identical results
// for any worker count. If several ranges throw, the exception from the
// lowest range (hence the lowest failing index) wins.
inline void parallel_for(Index n, int workers, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  int w = workers <= 0 ? static_cast<int>(std::thread::hardware_concurrency()) : workers;
  if (w < 1) w = 1;
  if (w == 1 || n == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<Index>(w) > n) w = static_cast<int>(n);

  std::vector<std::exception_ptr> errors(static_cast<size_t>(w));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(w));
  const Index chunk = (n + w - 1) / w;
  for (int t = 0; t < w; ++t) {
    const Index lo = static_cast<Index>(t) * chunk;
    const Index hi = std::min(n, lo + chunk);
    threads.emplace_back([&, t, lo, hi] {
      try {
        for (Index i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : threads) th.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace capfield
