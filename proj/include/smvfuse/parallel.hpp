#ifndef SMVFUSE_PARALLEL_HPP
#define SMVFUSE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace smvfuse {

/// Environment variable capping worker threads.
inline constexpr const char *kThreadsEnv = "SMVFUSE_THREADS";

/**
 * Worker count: `requested` when positive, else SMVFUSE_THREADS when set to a
 * positive integer, else the hardware concurrency.
 */
inline unsigned resolve_thread_count(int requested = 0) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char *env = std::getenv(kThreadsEnv)) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception &) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs body(i) for i in [0, count). Items are handed out dynamically, so the
 * body must only write state owned by item i; results are then independent
 * of the worker count.
 */
template <typename Body>
void parallel_for(int count, unsigned threads, Body &&body) {
  if (count <= 0) return;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(count));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace smvfuse

#endif  // SMVFUSE_PARALLEL_HPP
