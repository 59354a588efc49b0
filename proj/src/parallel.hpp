#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ttlbp::detail {

// Samples are processed in fixed-size chunks; per-chunk partial results are
// reduced in chunk order, so results never depend on the thread count.
inline constexpr std::size_t kSampleChunk = 8;

inline std::size_t chunk_count(std::size_t items) {
  return (items + kSampleChunk - 1) / kSampleChunk;
}

// Calls fn(chunk, first, last) for every chunk, spread over `threads` workers.
template <typename Fn>
void for_each_chunk(std::size_t items, std::size_t threads, Fn&& fn) {
  const std::size_t chunks = chunk_count(items);
  auto run = [&](std::size_t c) {
    const std::size_t first = c * kSampleChunk;
    fn(c, first, std::min(items, first + kSampleChunk));
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < chunks; c += workers) run(c);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ttlbp::detail
