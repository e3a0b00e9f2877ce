#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace exrange {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}
// Nested parallel_for calls run serially inside a worker.
inline thread_local bool in_parallel_region = false;
}  // namespace detail

/// Worker count used when none was set explicitly: EXRANGE_THREADS, else all cores.
inline int default_threads() {
  if (const char* env = std::getenv("EXRANGE_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

inline int threads() {
  int n = detail::thread_setting().load();
  return n > 0 ? n : default_threads();
}

inline void set_threads(int n) { detail::thread_setting().store(n > 0 ? n : 0); }

/// Calls body(i) for every i in [0, n). Items are claimed dynamically, so the
/// body must only write state owned by index i; results are then independent
/// of the worker count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads()), n);
  if (workers <= 1 || detail::in_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    struct Restore {
      bool v;
      ~Restore() { detail::in_parallel_region = v; }
    } restore{outer};
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Fixed-size chunking for reductions: chunk boundaries depend only on n, so
/// summing per-chunk partials in chunk order is reproducible for any thread count.
struct Chunks {
  std::size_t n;
  std::size_t chunk;
  std::size_t count() const { return chunk == 0 ? 0 : (n + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(n, (c + 1) * chunk); }
};

}  // namespace exrange
