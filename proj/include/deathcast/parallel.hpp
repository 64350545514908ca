#ifndef DEATHCAST_PARALLEL_HPP_
#define DEATHCAST_PARALLEL_HPP_

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace deathcast {
namespace detail {

template <typename T, typename Fn>
void RunWorkers(std::vector<std::optional<T>>& slots, std::size_t workers, Fn& fn) {
  const std::size_t n = slots.size();
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          slots[i].emplace(fn(i));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// out[i] = fn(i) for i in [0, n) on up to `threads` workers. Results land at
// their own index, so the output never depends on scheduling. The lowest
// failing index's exception is rethrown.
template <typename T, typename Fn>
std::vector<T> ParallelMap(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::optional<T>> slots(n);
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i].emplace(fn(i));
  } else {
    detail::RunWorkers(slots, workers, fn);
  }
  std::vector<T> out;
  out.reserve(n);
  for (std::optional<T>& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace deathcast

#endif  // DEATHCAST_PARALLEL_HPP_
