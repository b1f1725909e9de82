#include "bigraph/threading.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace bigraph {

static int read_thread_cap() {
  unsigned hw = std::thread::hardware_concurrency();
  int cap = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("BIGRAPH_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v >= 1) cap = v;
    } catch (...) {
      // ignore malformed values, keep hardware default
    }
  }
  return cap < 1 ? 1 : cap;
}

int max_threads() {
  static int cap = read_thread_cap();
  return cap;
}

namespace detail {

namespace {

thread_local bool t_in_parallel = false;

// One parallel_for invocation. Workers only ever touch the task they grabbed
// under the pool mutex, so a straggler from an old run cannot claim chunks of
// a new one.
struct Task {
  const std::function<void(int64_t, int64_t)>* fn = nullptr;
  int64_t n = 0;
  int64_t chunks = 0;
  int64_t chunk_size = 0;
  std::atomic<int64_t> next{0};
  std::atomic<int64_t> done{0};
};

class Pool {
 public:
  explicit Pool(int workers) {
    threads_.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
  }

  void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    auto task = std::make_shared<Task>();
    task->fn = &fn;
    task->n = n;
    task->chunks = std::min<int64_t>(n, max_threads());
    task->chunk_size = (n + task->chunks - 1) / task->chunks;
    {
      std::lock_guard<std::mutex> lk(m_);
      current_ = task;
      ++generation_;
    }
    cv_work_.notify_all();
    execute(*task);
    std::unique_lock<std::mutex> lk(m_);
    cv_done_.wait(lk, [&] { return task->done.load(std::memory_order_acquire) >= task->chunks; });
  }

 private:
  void execute(Task& t) {
    t_in_parallel = true;
    for (;;) {
      int64_t c = t.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= t.chunks) break;
      int64_t lo = c * t.chunk_size;
      int64_t hi = std::min<int64_t>(t.n, lo + t.chunk_size);
      if (lo < hi) (*t.fn)(lo, hi);
      if (t.done.fetch_add(1, std::memory_order_acq_rel) + 1 >= t.chunks) {
        std::lock_guard<std::mutex> lk(m_);
        cv_done_.notify_all();
      }
    }
    t_in_parallel = false;
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Task> task;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_work_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        task = current_;
      }
      if (task) execute(*task);
    }
  }

  std::vector<std::thread> threads_;
  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  std::shared_ptr<Task> current_;
  uint64_t generation_ = 0;
};

Pool* pool_instance() {
  // leaked intentionally so parked workers never race static destruction
  static Pool* pool = new Pool(max_threads() - 1);
  return pool;
}

}  // namespace

bool in_parallel_region() { return t_in_parallel; }

void pool_run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  pool_instance()->run(n, fn);
}

}  // namespace detail

}  // namespace bigraph
