#pragma once

// Static-partition parallel loop. Every output element is produced by exactly
// one worker in a fixed iteration order, so results are bit-identical for any
// worker count. The budget is thread-local: concurrent training sessions can
// each run with their own (usually serial) budget.

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mmsr {

namespace detail {
inline int& thread_budget_ref() {
  thread_local int budget = 0;  // 0 = unresolved, resolve lazily
  return budget;
}

inline int default_thread_count() {
  if (const char* env = std::getenv("MMSR_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace detail

inline int thread_count() {
  int& b = detail::thread_budget_ref();
  if (b == 0) b = detail::default_thread_count();
  return b;
}

inline void set_thread_count(int n) { detail::thread_budget_ref() = std::max(1, n); }

// RAII scope for temporarily changing this thread's worker budget.
class ThreadBudget {
 public:
  explicit ThreadBudget(int n) : saved_(thread_count()) { set_thread_count(n); }
  ~ThreadBudget() { set_thread_count(saved_); }
  ThreadBudget(const ThreadBudget&) = delete;
  ThreadBudget& operator=(const ThreadBudget&) = delete;

 private:
  int saved_;
};

// Runs fn(i) for i in [begin, end). Contiguous index blocks per worker.
template <class Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  const int workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  const int chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn]() {
      set_thread_count(1);  // no nested parallelism
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mmsr
