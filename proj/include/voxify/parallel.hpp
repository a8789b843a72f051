#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace voxify {

/// Worker count: VOXIFY_THREADS if set and positive, else the hardware concurrency.
inline int worker_threads() {
  if (const char* env = std::getenv("VOXIFY_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(chunk) for chunk in [0, chunks). Work is split into a fixed number
/// of chunks so reductions over per-chunk results do not depend on the thread
/// count.
template <typename F>
void parallel_chunks(int chunks, F&& f) {
  const int threads = std::min(worker_threads(), chunks);
  if (threads <= 1) {
    for (int c = 0; c < chunks; ++c) f(c);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int c = t; c < chunks; c += threads) f(c);
    });
}

/// [begin, end) of chunk `c` when splitting n items into `chunks` pieces.
inline std::pair<size_t, size_t> chunk_range(size_t n, int chunks, int c) {
  return {n * static_cast<size_t>(c) / chunks, n * static_cast<size_t>(c + 1) / chunks};
}

}  // namespace voxify
