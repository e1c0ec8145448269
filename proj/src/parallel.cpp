#include "vamamba/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace vamamba {

namespace {

std::size_t threads_from_env() {
  const char* env = std::getenv("VAMAMBA_THREADS");
  if (!env) return 1;
  try {
    long v = std::stol(env);
    return v >= 1 ? static_cast<std::size_t>(v) : 1;
  } catch (...) {
    return 1;
  }
}

std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> threads{threads_from_env()};
  return threads;
}

}  // namespace

std::size_t kernel_threads() { return thread_setting().load(); }

void set_kernel_threads(std::size_t threads) { thread_setting().store(std::max<std::size_t>(1, threads)); }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(kernel_threads(), count);
  if (workers <= 1) {
    if (count) body(0, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(count, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace vamamba
