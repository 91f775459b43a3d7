#pragma once

// Multi-worker task scheduler. Tasks submitted from outside land in a shared
// injector queue; tasks submitted from inside a worker go to that worker's
// own deque, and idle workers steal from the back of a random victim's deque.
// Every submitted task runs exactly once; shutdown drains queued tasks before
// joining. A task may block on another task it submitted provided the pool
// has at least two workers.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace shardgraph::rt {

using Task = std::function<void()>;

class TaskPool {
 public:
  explicit TaskPool(size_t worker_count = 4);
  ~TaskPool();

  TaskPool(const TaskPool &) = delete;
  TaskPool &operator=(const TaskPool &) = delete;

  void submit(Task task);
  // Drains all queued tasks, then joins the workers. Idempotent.
  void shutdown();

  size_t worker_count() const { return workers_.size(); }
  // Tasks executed per worker; steal-path diagnostics.
  std::vector<uint64_t> executed_per_worker() const;

 private:
  struct WorkerQueue {
    mutable std::mutex mu;
    std::deque<Task> q;
    uint64_t executed = 0;
  };

  void worker_loop(size_t index);
  bool try_get_task(size_t index, Task &out);

  std::vector<std::unique_ptr<WorkerQueue>> queues_;
  std::vector<std::thread> workers_;

  std::mutex injector_mu_;
  std::deque<Task> injector_;

  std::mutex idle_mu_;
  std::condition_variable idle_cv_;
  std::atomic<uint64_t> pending_{0};  // submitted, not yet finished
  std::atomic<uint64_t> queued_{0};   // sitting in a queue
  std::atomic<bool> stopping_{false};
  std::once_flag shutdown_once_;
};

// One dedicated thread executing closures in submission order. Shard
// processes run their read/write transactions on such a worker; execute()
// batches every closure queued at wake-up into a caller-provided group
// handler so commits can be coalesced.
class SerialWorker {
 public:
  using Group = std::vector<std::function<void()>>;
  // group_runner receives the closures drained in one wake-up; it decides
  // how to wrap them (e.g. one transaction around the batch).
  explicit SerialWorker(std::function<void(Group &)> group_runner, size_t max_group = 512);
  ~SerialWorker();

  void submit(std::function<void()> fn);
  // Runs fn on the worker and waits for it (and the group it joins).
  void run_sync(std::function<void()> fn);
  void shutdown();

 private:
  void loop();

  std::function<void(Group &)> group_runner_;
  size_t max_group_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> q_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace shardgraph::rt
