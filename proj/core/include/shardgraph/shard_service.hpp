#pragma once

// Server side of one shard: the graph store, the RPC handler set, and the
// dedicated writer worker that serializes read/write transactions.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "shardgraph/dist_graph.hpp"
#include "shardgraph/graph_store.hpp"
#include "shardgraph/hostfile.hpp"
#include "shardgraph/rpc.hpp"
#include "shardgraph/task_pool.hpp"

namespace shardgraph::dist {

// The single writer thread of a shard. Queued operations are grouped into
// one read/write transaction per wake-up; completions run only after that
// transaction has committed durably, so a reply never precedes its commit.
// If the group commit fails, each operation is retried in its own
// transaction so one poisoned operation cannot take down its neighbors.
class WriteQueue {
 public:
  struct WriteOp {
    std::function<void(graph::GraphTxn &)> work;
    std::function<void(std::exception_ptr)> done;  // nullptr exception = success
  };

  WriteQueue(graph::GraphStore &store, size_t max_group = 512);
  ~WriteQueue();

  void submit(WriteOp op);
  void shutdown();
  uint64_t groups_committed() const { return groups_committed_; }

 private:
  void loop();
  graph::GraphStore &store_;
  size_t max_group_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<WriteOp> q_;
  bool stopping_ = false;
  std::atomic<uint64_t> groups_committed_{0};
  std::thread thread_;
};

struct ShardOptions {
  std::string data_dir;
  std::string graph_name = "default";
  size_t pool_workers = 4;
  size_t writer_max_group = 512;
  bool create_if_missing = true;
  graph::GraphConfig graph;  // shard_id is filled from the node id
};

class ShardServer {
 public:
  ShardServer(ClusterView cluster, uint32_t shard_id, ShardOptions opts);
  ~ShardServer();

  void start();
  void stop();
  // Blocks until a remote shutdown request arrives (or stop() is called).
  void wait_for_shutdown();
  bool shutdown_requested() const {
    std::lock_guard lk(shutdown_mu_);
    return shutdown_requested_;
  }

  graph::GraphStore &store() { return *store_; }
  rpc::RpcNode &node() { return *node_; }
  uint32_t shard_id() const { return shard_id_; }

 private:
  void register_handlers();
  LabelId intern_label(graph::GraphTxn &txn, LabelId id, std::string_view name);

  ClusterView cluster_;
  uint32_t shard_id_;
  ShardOptions opts_;
  std::unique_ptr<graph::GraphStore> store_;
  std::unique_ptr<rt::TaskPool> pool_;
  std::unique_ptr<rpc::RpcNode> node_;
  std::unique_ptr<WriteQueue> writer_;

  mutable std::mutex shutdown_mu_;
  std::condition_variable shutdown_cv_;
  bool shutdown_requested_ = false;
};

}  // namespace shardgraph::dist
