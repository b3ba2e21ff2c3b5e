#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace subradius {

/// Number of worker threads to use. `requested == 0` means "auto": the
/// SUBRADIUS_THREADS environment variable if set, otherwise the hardware
/// concurrency. The result is always at least 1.
inline int worker_count(int requested = 0) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("SUBRADIUS_THREADS")) {
      n = std::atoi(env);
    }
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return n;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Tasks are
/// assigned in index order; results must be written into caller-owned slots
/// indexed by i so the merge is independent of scheduling.
inline void parallel_for(int count, const std::function<void(int)>& fn, int threads = 0) {
  const int workers = std::min(worker_count(threads), std::max(count, 1));
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace subradius
