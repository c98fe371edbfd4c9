#include "tbsc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tbsc {

namespace {

std::atomic<std::size_t> g_cap{0};
thread_local bool t_in_parallel = false;

std::size_t env_cap() {
  if (const char* env = std::getenv("TBSC_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return 0;
}

}  // namespace

void set_thread_cap(std::size_t cap) { g_cap.store(cap); }

std::size_t thread_cap() {
  std::size_t cap = g_cap.load();
  if (cap == 0) cap = env_cap();
  if (cap == 0) cap = std::max(1u, std::thread::hardware_concurrency());
  return cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::size_t workers = std::min(thread_cap(), n);
  // nested regions run inline on the calling worker
  if (workers <= 1 || t_in_parallel) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    bool outer = t_in_parallel;
    t_in_parallel = true;
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) {
        t_in_parallel = outer;
        return;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tbsc
