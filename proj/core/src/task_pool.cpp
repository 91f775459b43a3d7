#include "shardgraph/task_pool.hpp"

#include <iostream>

#include "shardgraph/errors.hpp"

namespace shardgraph::rt {

namespace {
thread_local TaskPool *tl_pool = nullptr;
thread_local size_t tl_worker = 0;
}  // namespace

TaskPool::TaskPool(size_t worker_count) {
  if (worker_count == 0) worker_count = 1;
  queues_.reserve(worker_count);
  for (size_t i = 0; i < worker_count; ++i) queues_.push_back(std::make_unique<WorkerQueue>());
  workers_.reserve(worker_count);
  for (size_t i = 0; i < worker_count; ++i)
    workers_.emplace_back([this, i] { worker_loop(i); });
}

TaskPool::~TaskPool() { shutdown(); }

void TaskPool::submit(Task task) {
  // Running tasks may keep submitting while shutdown drains; only reject
  // external submissions once stopping.
  if (stopping_ && tl_pool != this)
    throw Error(ErrorCode::invalid_argument, "submit after shutdown");
  pending_.fetch_add(1);
  if (tl_pool == this) {
    std::lock_guard lk(queues_[tl_worker]->mu);
    queues_[tl_worker]->q.push_back(std::move(task));
  } else {
    std::lock_guard lk(injector_mu_);
    injector_.push_back(std::move(task));
  }
  queued_.fetch_add(1);
  idle_cv_.notify_one();
}

bool TaskPool::try_get_task(size_t index, Task &out) {
  {
    WorkerQueue &own = *queues_[index];
    std::lock_guard lk(own.mu);
    if (!own.q.empty()) {
      out = std::move(own.q.front());
      own.q.pop_front();
      return true;
    }
  }
  {
    std::lock_guard lk(injector_mu_);
    if (!injector_.empty()) {
      out = std::move(injector_.front());
      injector_.pop_front();
      return true;
    }
  }
  // Steal one task from the back of a random victim's deque.
  size_t n = queues_.size();
  if (n > 1) {
    static thread_local uint64_t steal_seed = 0x9e3779b97f4a7c15ull ^ (tl_worker + 1);
    steal_seed ^= steal_seed << 13;
    steal_seed ^= steal_seed >> 7;
    steal_seed ^= steal_seed << 17;
    size_t start = (index + 1 + steal_seed % (n - 1)) % n;
    for (size_t k = 0; k < n; ++k) {
      size_t victim = (start + k) % n;
      if (victim == index) continue;
      WorkerQueue &vq = *queues_[victim];
      std::lock_guard lk(vq.mu);
      if (!vq.q.empty()) {
        out = std::move(vq.q.back());
        vq.q.pop_back();
        return true;
      }
    }
  }
  return false;
}

void TaskPool::worker_loop(size_t index) {
  tl_pool = this;
  tl_worker = index;
  while (true) {
    Task task;
    if (try_get_task(index, task)) {
      queued_.fetch_sub(1);
      try {
        task();
      } catch (const std::exception &e) {
        std::cerr << "task failed: " << e.what() << "\n";
      } catch (...) {
        std::cerr << "task failed with unknown exception\n";
      }
      {
        std::lock_guard lk(queues_[index]->mu);
        ++queues_[index]->executed;
      }
      if (pending_.fetch_sub(1) == 1 && stopping_) idle_cv_.notify_all();
      continue;
    }
    std::unique_lock lk(idle_mu_);
    if (stopping_ && pending_.load() == 0) return;
    idle_cv_.wait_for(lk, std::chrono::milliseconds(100), [&] {
      return queued_.load() > 0 || (stopping_.load() && pending_.load() == 0);
    });
    if (stopping_ && pending_.load() == 0) return;
  }
}

void TaskPool::shutdown() {
  std::call_once(shutdown_once_, [this] {
    stopping_ = true;
    idle_cv_.notify_all();
    for (std::thread &t : workers_)
      if (t.joinable()) t.join();
  });
}

std::vector<uint64_t> TaskPool::executed_per_worker() const {
  std::vector<uint64_t> out;
  out.reserve(queues_.size());
  for (const auto &q : queues_) {
    std::lock_guard lk(q->mu);
    out.push_back(q->executed);
  }
  return out;
}

// ---- SerialWorker ----

SerialWorker::SerialWorker(std::function<void(Group &)> group_runner, size_t max_group)
    : group_runner_(std::move(group_runner)), max_group_(max_group) {
  if (!group_runner_)
    group_runner_ = [](Group &g) {
      for (auto &fn : g) fn();
    };
  thread_ = std::thread([this] { loop(); });
}

SerialWorker::~SerialWorker() { shutdown(); }

void SerialWorker::submit(std::function<void()> fn) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) throw Error(ErrorCode::invalid_argument, "submit after shutdown");
    q_.push_back(std::move(fn));
  }
  cv_.notify_one();
}

void SerialWorker::run_sync(std::function<void()> fn) {
  std::promise<void> done;
  auto fut = done.get_future();
  submit([&fn, &done] {
    try {
      fn();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  fut.get();
}

void SerialWorker::shutdown() {
  {
    std::lock_guard lk(mu_);
    if (stopping_) {
      if (thread_.joinable()) thread_.join();
      return;
    }
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void SerialWorker::loop() {
  while (true) {
    Group group;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return stopping_ || !q_.empty(); });
      if (q_.empty() && stopping_) return;
      while (!q_.empty() && group.size() < max_group_) {
        group.push_back(std::move(q_.front()));
        q_.pop_front();
      }
    }
    try {
      group_runner_(group);
    } catch (const std::exception &e) {
      std::cerr << "write group failed: " << e.what() << "\n";
    } catch (...) {
      std::cerr << "write group failed with unknown exception\n";
    }
  }
}

}  // namespace shardgraph::rt
