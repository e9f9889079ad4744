#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vobs {

// Runs fn(i) for i in [0, n) on up to `workers` threads; every index is
// processed by exactly one thread and results are written by index, so the
// outcome does not depend on scheduling. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (k <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> threads;
  threads.reserve(k);
  for (std::size_t w = 0; w < k; ++w)
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += k) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vobs
