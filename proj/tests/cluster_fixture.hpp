#pragma once

// In-process cluster: P shard servers on loopback ports plus a proxy-mode
// distributed graph owned by the test. Message budgets are asserted by
// summing the per-node counters over every node in the cluster.

#include <memory>
#include <vector>

#include "shardgraph/dist_graph.hpp"
#include "shardgraph/dump.hpp"
#include "shardgraph/query_manager.hpp"
#include "shardgraph/shard_service.hpp"
#include "test_util.hpp"

namespace shardgraph::test {

class ClusterFixture {
 public:
  explicit ClusterFixture(uint32_t shard_count, dist::ProxyOptions proxy_opts = {},
                          dist::ShardOptions shard_opts = {})
      : dir_("cluster") {
    auto ports = pick_free_ports(shard_count + 1);
    for (uint32_t i = 0; i <= shard_count; ++i)
      view_.endpoints.push_back({i, "127.0.0.1", ports[i]});
    for (uint32_t s = 0; s < shard_count; ++s) {
      dist::ShardOptions opts = shard_opts;
      opts.data_dir = dir_.sub("shard" + std::to_string(s));
      shards_.push_back(std::make_unique<dist::ShardServer>(view_, s, opts));
      shards_.back()->start();
    }
    proxy_node_ = std::make_unique<rpc::RpcNode>(view_, -1, nullptr);
    dg_ = std::make_unique<dist::DistributedGraph>(view_, proxy_node_.get(), proxy_opts);
  }

  ~ClusterFixture() {
    dg_.reset();
    if (proxy_node_) proxy_node_->stop();
    for (auto &s : shards_) s->stop();
  }

  const ClusterView &view() const { return view_; }
  dist::DistributedGraph &dg() { return *dg_; }
  rpc::RpcNode &proxy_node() { return *proxy_node_; }
  dist::ShardServer &shard(uint32_t s) { return *shards_[s]; }
  uint32_t shard_count() const { return static_cast<uint32_t>(shards_.size()); }

  void reset_counters() {
    proxy_node_->counters_reset();
    for (auto &s : shards_) s->node().counters_reset();
  }

  // Total frames sent across every node (each frame is one message).
  uint64_t total_messages() const {
    uint64_t n = proxy_node_->counters_snapshot().total_sent();
    for (const auto &s : shards_) n += s->node().counters_snapshot().total_sent();
    return n;
  }

  uint64_t messages_of_opcode(uint16_t opcode) const {
    uint64_t n = proxy_node_->counters_snapshot().sent(opcode);
    for (const auto &s : shards_) n += s->node().counters_snapshot().sent(opcode);
    return n;
  }

  dump::GraphDump full_dump() {
    return dump::collect_cluster_dump(*proxy_node_, shard_count());
  }

  // An external id with the given placement, built from a prefix.
  std::string ext_on_shard(const std::string &prefix, uint32_t shard) const {
    for (int i = 0;; ++i) {
      std::string ext = prefix + std::to_string(i);
      if (dist::shard_of_external(ext, view_.shard_count()) == shard) return ext;
    }
  }

 private:
  TempDir dir_;
  ClusterView view_;
  std::vector<std::unique_ptr<dist::ShardServer>> shards_;
  std::unique_ptr<rpc::RpcNode> proxy_node_;
  std::unique_ptr<dist::DistributedGraph> dg_;
};

}  // namespace shardgraph::test
