#pragma once

// Client-facing query manager: a proxy-mode distributed graph plus the
// fixed-depth BFS. The frontier is partitioned by owning shard; each level
// issues one asynchronous adjacency request per non-empty shard bucket, polls
// for the replies, and assembles the next frontier with deduplication here,
// not on the shards.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shardgraph/dist_graph.hpp"
#include "shardgraph/hostfile.hpp"
#include "shardgraph/rpc.hpp"
#include "shardgraph/task_pool.hpp"

namespace shardgraph::qm {

// Vertex ids grouped by owning shard; no id appears in two buckets.
class PartitionedFrontier {
 public:
  explicit PartitionedFrontier(uint32_t shards) : buckets_(shards) {}

  void insert(VertexId v) { buckets_[vertex_shard(v) % buckets_.size()].push_back(v); }
  uint32_t locations() const { return static_cast<uint32_t>(buckets_.size()); }
  std::vector<VertexId> &bucket(uint32_t shard) { return buckets_[shard]; }
  size_t size() const {
    size_t n = 0;
    for (const auto &b : buckets_) n += b.size();
    return n;
  }
  void clear() {
    for (auto &b : buckets_) b.clear();
  }

 private:
  std::vector<std::vector<VertexId>> buckets_;
};

struct BfsLevelTiming {
  uint64_t issue_us = 0;     // posting the per-shard async requests
  uint64_t remote_us = 0;    // shard-side execution (reported, clamped)
  uint64_t transfer_us = 0;  // waiting on replies beyond remote execution
  uint64_t process_us = 0;   // frontier assembly
};

struct BfsResult {
  std::vector<VertexId> visited;  // unique, ascending id order
  uint64_t edges_traversed = 0;
  std::vector<BfsLevelTiming> levels;
  std::vector<std::string> externals;  // filled when resolve_externals is set
};

struct BfsOptions {
  bool resolve_externals = false;
};

// Traverses OUT edges from the start vertex for at most max_depth hops.
BfsResult bfs_fixed_depth(dist::DistributedGraph &dg, const std::string &start_ext,
                          uint32_t max_depth, const BfsOptions &opts = {});

struct QmOptions {
  size_t pool_workers = 4;
  dist::ProxyOptions proxy;
};

class QueryManager {
 public:
  QueryManager(ClusterView cluster, QmOptions opts = {});
  ~QueryManager();

  void start();
  void stop();
  void wait_for_shutdown();
  bool shutdown_requested() const {
    std::lock_guard lk(shutdown_mu_);
    return shutdown_requested_;
  }

  dist::DistributedGraph &graph() { return *dg_; }
  rpc::RpcNode &node() { return *node_; }

 private:
  void register_handlers();

  ClusterView cluster_;
  QmOptions opts_;
  std::unique_ptr<rt::TaskPool> pool_;
  std::unique_ptr<rpc::RpcNode> node_;
  std::unique_ptr<dist::DistributedGraph> dg_;

  mutable std::mutex shutdown_mu_;
  std::condition_variable shutdown_cv_;
  bool shutdown_requested_ = false;
};

// Thin client for the query manager's native protocol.
class QmClient {
 public:
  explicit QmClient(ClusterView cluster);
  ~QmClient();

  BfsResult bfs(const std::string &start_ext, uint32_t depth, bool resolve_externals = false);
  VertexId add_vertex(const std::string &ext, const std::string &label,
                      const std::vector<NamedProp> &props = {});
  // Forwarded through the asynchronous add-edge protocol with confirmation.
  EdgeId add_edge(const std::string &src, const std::string &label, const std::string &tgt,
                  const std::vector<NamedProp> &props = {});
  std::optional<VertexId> get_vertex(const std::string &ext);
  void set_vertex_property(const std::string &ext, const std::string &name,
                           const PropValue &value);
  std::optional<PropValue> get_vertex_property(const std::string &ext, const std::string &name);

 private:
  ClusterView cluster_;
  std::unique_ptr<rpc::RpcNode> node_;
};

}  // namespace shardgraph::qm
