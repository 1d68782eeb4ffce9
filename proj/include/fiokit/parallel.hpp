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

namespace fiokit {

namespace detail {
inline std::atomic<int>& worker_slot() {
  static std::atomic<int> workers{0};
  return workers;
}
}  // namespace detail

/// Number of worker threads used by the data-parallel loops. Zero means
/// "not set": FIOKIT_WORKERS is consulted, then 1.
inline int workers() {
  int w = detail::worker_slot().load();
  if (w > 0) return w;
  if (const char* env = std::getenv("FIOKIT_WORKERS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

inline void set_workers(int n) { detail::worker_slot().store(std::max(0, n)); }

/// Runs body(begin, end) over [0, n) split into `chunks` fixed pieces.
/// The split depends only on n and chunks, never on the worker count, so
/// any reduction done per chunk is reproducible bit for bit.
template <class Body>
void parallel_chunks(std::size_t n, std::size_t chunks, Body&& body) {
  if (n == 0) return;
  chunks = std::max<std::size_t>(1, std::min(chunks, n));
  auto bounds = [&](std::size_t c) {
    return std::pair<std::size_t, std::size_t>{c * n / chunks, (c + 1) * n / chunks};
  };
  const int w = std::min<int>(workers(), static_cast<int>(chunks));
  if (w <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [b, e] = bounds(c);
      body(c, b, e);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      try {
        for (std::size_t c = next++; c < chunks; c = next++) {
          auto [b, e] = bounds(c);
          body(c, b, e);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Independent-output loop: body(begin, end) writes only to slots in range.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  parallel_chunks(n, std::max<std::size_t>(1, 4 * static_cast<std::size_t>(workers())),
                  [&](std::size_t, std::size_t b, std::size_t e) { body(b, e); });
}

}  // namespace fiokit
