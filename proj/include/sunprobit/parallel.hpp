#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace sunprobit {
namespace detail {

// Static index partitioning over worker threads. Workers write only to their
// own indices, so results are identical to the sequential loop regardless of
// scheduling.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t max_threads = 0) {
  if (count == 0) return;
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (max_threads > 0 && max_threads < hw) hw = max_threads;
  std::size_t workers = std::min(hw, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

} // namespace detail
} // namespace sunprobit
