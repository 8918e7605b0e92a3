#pragma once

#include <algorithm>
#include <atomic>
#include <thread>

namespace nlvae::cli {

template <typename Job>
void parallel_for(int count, int workers, Job&& job) {
  const int threads = std::clamp(workers, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace nlvae::cli
