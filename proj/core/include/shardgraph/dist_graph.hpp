#pragma once

// Distributed graph facade. A proxy-mode instance owns no data: it maps
// external ids to shards with a hash placement function, forwards single
// vertex/edge operations over RPC, and implements the synchronous and
// asynchronous add-edge protocols plus distributed deletes.

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardgraph/graph_store.hpp"
#include "shardgraph/hostfile.hpp"
#include "shardgraph/rpc.hpp"

namespace shardgraph::dist {

// Deterministic default placement: FNV-1a over the external id, modulo the
// shard count.
inline uint32_t shard_of_external(std::string_view ext, uint32_t shard_count) {
  if (shard_count == 0) throw Error(ErrorCode::invalid_argument, "no shards");
  return static_cast<uint32_t>(fnv1a64(ext) % shard_count);
}

// ---- shared payload fragments ----

void write_props(wire::PayloadWriter &w, const std::vector<NamedProp> &props);
std::vector<NamedProp> read_props(wire::PayloadReader &r);

struct WireEdge {
  VertexId src = 0;
  VertexId tgt = 0;
  LabelId label = 0;
  EdgeId edge = 0;
};

// Bounded LRU map from external id to internal id.
class VertexCache {
 public:
  explicit VertexCache(size_t capacity) : capacity_(capacity) {}

  std::optional<VertexId> get(std::string_view ext);
  void put(std::string_view ext, VertexId vid);
  void erase(std::string_view ext);
  void clear();
  size_t size() const;

 private:
  size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::string> order_;  // most recent at front
  std::unordered_map<std::string, std::pair<VertexId, std::list<std::string>::iterator>> map_;
};

struct ProxyOptions {
  size_t vertex_cache_capacity = 1'000'000;
  bool vertex_cache_enabled = true;
};

class DistributedGraph {
 public:
  // The node may be client-only; shard endpoints come from the cluster view.
  DistributedGraph(const ClusterView &cluster, rpc::RpcNode *node, ProxyOptions opts = {});

  uint32_t shard_count() const { return cluster_.shard_count(); }
  uint32_t shard_of(std::string_view ext) const {
    return shard_of_external(ext, shard_count());
  }

  // -- vertices --
  VertexId add_vertex(const std::string &ext, const std::string &label,
                      const std::vector<NamedProp> &props = {});
  std::optional<VertexId> get_vertex(const std::string &ext);

  // -- labels --
  // Resolved through the proxy cache; a miss asks the interning authority
  // (shard 0) once.
  LabelId resolve_label(const std::string &label);

  // -- edges --
  // Fig-3 steps executed sequentially from this caller: resolve target,
  // resolve source, label from the local cache, write the outgoing edge
  // (allocating the edge id), send the incoming edge (one-way unless confirm).
  EdgeId add_edge_sync(const std::string &src_ext, const std::string &label,
                       const std::string &tgt_ext, const std::vector<NamedProp> &props = {},
                       bool confirm = false);
  // Three-hop chain: target shard resolves the target, forwards to the source
  // shard which writes the outgoing edge, which forwards back to the target
  // shard for the incoming edge; an optional fourth message confirms to us.
  // With confirm the returned handle resolves to the allocated edge id.
  rpc::HandlePtr add_edge_async(const std::string &src_ext, const std::string &label,
                                const std::string &tgt_ext,
                                const std::vector<NamedProp> &props = {}, bool confirm = true);
  static EdgeId edge_id_from_ack(const std::string &ack_body);

  // One request per shard returning the concatenated out-edge lists of the
  // requested vertices, read in a single shard snapshot.
  rpc::HandlePtr get_all_edges_async(uint32_t shard, const std::vector<VertexId> &vids);
  struct EdgesReply {
    std::vector<WireEdge> edges;
    uint64_t server_micros = 0;
  };
  static EdgesReply parse_edges_reply(const std::string &body);

  std::vector<WireEdge> get_out_edges(const std::string &ext);

  // -- properties --
  void set_vertex_property(const std::string &ext, const std::string &name,
                           const PropValue &value);
  std::optional<PropValue> get_vertex_property(const std::string &ext, const std::string &name);
  void set_edge_property(EdgeId eid, const std::string &src_ext, const std::string &name,
                         const PropValue &value);
  std::optional<PropValue> get_edge_property(EdgeId eid, const std::string &src_ext,
                                             const std::string &name);

  // -- deletes --
  // One transaction on the owner shard, then one purge message per remote
  // half-edge reference it returns. Not atomic across shards.
  void delete_vertex(const std::string &ext);
  void delete_edge(EdgeId eid, const std::string &src_ext, const std::string &tgt_ext);

  // -- misc --
  void poll() { node_->poll(); }
  void flush_vertex_cache();
  void set_vertex_cache_enabled(bool enabled);
  std::vector<std::string> resolve_externals(const std::vector<VertexId> &vids);

  rpc::RpcNode &node() { return *node_; }
  const ClusterView &cluster() const { return cluster_; }

 private:
  VertexId resolve_or_create(const std::string &ext, LabelId label,
                             const std::string &label_name);

  ClusterView cluster_;
  rpc::RpcNode *node_;
  ProxyOptions opts_;
  VertexCache vertex_cache_;
  std::mutex label_mu_;
  std::unordered_map<std::string, LabelId> label_cache_;
};

}  // namespace shardgraph::dist
