#pragma once

// Deterministic chunked parallelism. Work is split into a fixed chunk grid
// that does not depend on the thread count, each chunk writes only its own
// outputs, and reductions happen in chunk order on the calling thread, so
// results are identical for any JENSENKV_THREADS setting.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace jensenkv {

inline int max_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("JENSENKV_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) hw = std::min(hw, cap);
    } catch (...) {
      // ignore malformed values, keep hardware default
    }
  }
  return hw;
}

// Invoke fn(chunk_index, begin, end) for every chunk of [0, n). Chunk
// boundaries depend only on n and chunk_size.
template <typename Fn>
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, Fn&& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int threads = std::min<int>(max_threads(), static_cast<int>(n_chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= n_chunks) return;
        fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace jensenkv
