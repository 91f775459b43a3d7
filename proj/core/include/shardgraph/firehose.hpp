#pragma once

// Batched ingest path. Edges and vertices accumulate in per-shard queues
// (one outgoing and one incoming edge queue per shard, double-buffered); a
// flush reserves edge-id ranges and ships one bulk vertex request and one
// bulk edge request per shard, four messages per shard in the worst case.

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "shardgraph/dist_graph.hpp"

namespace shardgraph::dist {

struct PendingEdge {
  std::string src;
  std::string tgt;
  std::string label;
  std::vector<NamedProp> props;
};

struct PendingVertex {
  std::string ext;
  std::string label;
  std::vector<NamedProp> props;
};

struct ShardFlushStats {
  uint32_t shard = 0;
  uint64_t vertices_sent = 0;
  uint64_t out_edges = 0;
  uint64_t in_edges = 0;
  graph::EdgeIdRange range;
  bool vertex_request_sent = false;
  bool edge_request_sent = false;
  bool failed = false;
  std::string error;
  double millis = 0;
};

struct FlushReport {
  uint64_t edges_submitted = 0;
  uint64_t vertices_submitted = 0;
  uint64_t edges_failed = 0;
  std::vector<ShardFlushStats> shards;
  double millis = 0;

  bool all_ok() const {
    for (const auto &s : shards)
      if (s.failed) return false;
    return true;
  }
};

struct FirehoseOptions {
  // Flush triggers once this many edges sit in the active set.
  size_t batch_size = 100'000;
  // Item-7 external-to-internal mapping cache; default on. Off forces every
  // endpoint through the bulk vertex request each flush.
  bool cache_mappings = true;
  std::string default_edge_label = "edge";
};

class Firehose {
 public:
  // Talks to the shard writer endpoints directly, bypassing the query
  // manager. The proxy graph supplies shard placement and the label cache.
  Firehose(DistributedGraph *dg, FirehoseOptions opts = {});
  ~Firehose();

  void submit_edge(PendingEdge edge);
  void submit_vertex(PendingVertex vertex);

  FlushReport flush();
  // Final flush, then detach. Further submissions are rejected.
  FlushReport close();

  // Reports from auto-triggered flushes inside submit_edge.
  std::vector<FlushReport> drain_auto_reports();

 private:
  struct BatchSet {
    std::vector<PendingEdge> edges;
    std::vector<std::vector<uint32_t>> out_by_shard;  // indices into edges
    std::vector<std::vector<uint32_t>> in_by_shard;
    std::vector<std::vector<PendingVertex>> vertices_by_shard;
    uint64_t vertex_count = 0;

    explicit BatchSet(uint32_t shards)
        : out_by_shard(shards), in_by_shard(shards), vertices_by_shard(shards) {}
    bool empty() const { return edges.empty() && vertex_count == 0; }
  };

  FlushReport flush_set(BatchSet &set);

  DistributedGraph *dg_;
  FirehoseOptions opts_;
  uint32_t shard_count_;
  std::mutex mu_;  // guards the active set pointer swap against submitters
  std::unique_ptr<BatchSet> active_;
  std::unique_ptr<BatchSet> standby_;
  VertexCache mapping_cache_;
  std::vector<FlushReport> auto_reports_;
  bool closed_ = false;
};

}  // namespace shardgraph::dist
