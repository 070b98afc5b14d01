#pragma once

// Deterministic trial-parallel execution.
//
// Work items are indexed 0..count-1 and must be pure functions of their index
// (plus whatever deterministic seed they derive from it).  Results are written
// into index-addressed slots by the callers, so the outcome is independent of
// the worker count and of scheduling order.  Exceptions thrown by work items
// are captured and rethrown on the calling thread (first one wins).

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rmtlab {

// Worker count resolution: explicit request > RMT_LAB_WORKERS env > hardware.
inline int resolve_workers(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RMT_LAB_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0 && v < 4096) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs body(i) for i in [0, count) on `workers` threads.  Dynamic chunked
// scheduling; chunk size only affects timing, never results.
template <class Body>
void parallel_for_index(std::uint64_t count, int workers, Body&& body) {
  workers = resolve_workers(workers);
  if (count == 0) return;
  if (workers <= 1 || count == 1) {
    for (std::uint64_t i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  const std::uint64_t chunk = std::max<std::uint64_t>(1, count / (8u * workers));

  auto worker = [&] {
    for (;;) {
      const std::uint64_t begin = next.fetch_add(chunk);
      if (begin >= count) return;
      const std::uint64_t end = std::min(count, begin + chunk);
      try {
        for (std::uint64_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rmtlab
