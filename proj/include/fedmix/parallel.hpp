#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fedmix {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items are
/// claimed dynamically, so body must write only to slot i of its output. The
/// first exception thrown (lowest index wins) is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body &&body) {
  const auto workers = static_cast<std::size_t>(std::max(1u, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = count;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(std::min(workers, count));
    for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

/// Pairwise reduction whose shape depends only on items.size(), so results are
/// bit-stable however the items were produced.
template <typename T, typename Combine>
T tree_reduce(std::vector<T> items, Combine &&combine) {
  for (std::size_t width = 1; width < items.size(); width *= 2) {
    for (std::size_t i = 0; i + width < items.size(); i += 2 * width) {
      combine(items[i], items[i + width]);
    }
  }
  return std::move(items.front());
}

}  // namespace fedmix
