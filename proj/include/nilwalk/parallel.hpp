#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nilwalk {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Work is handed
// out in blocks; fn must write only to slots owned by i.
template <class F>
void parallel_for(std::int64_t count, int threads, F&& fn, std::int64_t block = 64) {
  threads = std::max(1, threads);
  if (threads == 1 || count <= block) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (;;) {
        std::int64_t start = next.fetch_add(block);
        if (start >= count) return;
        std::int64_t stop = std::min(count, start + block);
        for (std::int64_t i = start; i < stop; ++i) fn(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(count);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace nilwalk
