#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace cotc {

// Runs fn(0..count-1) with at most max_in_flight workers. Results keep input
// order, so downstream aggregation is deterministic regardless of scheduling.
// A failed item logs to stderr and yields nullopt instead of aborting the
// batch.
template <typename Out, typename Fn>
std::vector<std::optional<Out>> bounded_parallel(std::size_t count, int max_in_flight, Fn&& fn) {
  std::vector<std::optional<Out>> results(count);
  if (count == 0) return results;
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, max_in_flight)));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          results[i] = fn(i);
        } catch (const std::exception& e) {
          std::fprintf(stderr, "[cotc] item %zu dropped: %s\n", i, e.what());
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace cotc
