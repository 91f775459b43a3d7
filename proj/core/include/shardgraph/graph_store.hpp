#pragma once

// Single-node property graph engine: five key-value databases (external and
// internal id maps, outgoing and incoming edge lists, vertex and edge
// property maps) plus label/property-name interning and persistent id
// counters, all inside one transactional environment per graph.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shardgraph/ids.hpp"
#include "shardgraph/kv.hpp"
#include "shardgraph/props.hpp"

namespace shardgraph::graph {

struct GraphConfig {
  uint32_t shard_id = 0;
  // Property rows keyed by entity id with duplicate values (default) or by
  // the concatenation of entity id and property id.
  bool concat_prop_keys = false;
  kv::EnvConfig env;
};

// Contiguous block of edge ids reserved on one shard; end is exclusive.
struct EdgeIdRange {
  uint32_t shard = 0;
  EdgeId begin = 0;
  EdgeId end = 0;

  uint64_t size() const { return end - begin; }
  bool contains(EdgeId e) const { return e >= begin && e < end; }
};

// A stale half-edge some other shard must remove after a vertex delete:
// either the outgoing record under `neighbor` (we held the incoming half) or
// the incoming record under `neighbor` (we held the outgoing half).
struct PurgeRef {
  VertexId neighbor = 0;
  LabelId label = 0;
  EdgeId edge = 0;
  bool purge_outgoing = false;
};

struct VertexSpec {
  std::string external;
  LabelId label = 0;
  std::string label_name;  // interned alongside the id when non-empty
  std::vector<NamedProp> props;
};

struct BatchEdge {
  VertexId owner = 0;
  EdgeRecord rec;
  bool incoming = false;
  std::vector<NamedProp> props;  // stored with the outgoing half only
};

void encode_edge_record(std::string &out, const EdgeRecord &rec);
EdgeRecord decode_edge_record(std::string_view bytes);

class GraphStore;

class GraphTxn {
 public:
  GraphTxn(GraphTxn &&) = default;
  GraphTxn(const GraphTxn &) = delete;

  // -- vertices --
  VertexId check_or_create_vertex(std::string_view external, LabelId label);
  std::optional<VertexId> find_vertex(std::string_view external) const;
  std::optional<std::string> external_of(VertexId v) const;

  // -- labels --
  LabelId check_or_create_label(std::string_view name);
  // Records an externally allocated (id, name) pair; shards other than the
  // interning authority learn label ids this way.
  void intern_label_as(LabelId id, std::string_view name);
  std::optional<LabelId> find_label(std::string_view name) const;
  std::optional<std::string> label_name(LabelId id) const;

  // -- edges --
  EdgeId add_outgoing_edge(VertexId src, VertexId tgt, LabelId label,
                           std::optional<EdgeId> eid = std::nullopt);
  void add_incoming_edge(VertexId tgt, VertexId src, EdgeId eid, LabelId label);
  std::vector<EdgeRecord> out_edges(VertexId v,
                                    std::optional<LabelId> label = std::nullopt) const;
  std::vector<EdgeRecord> in_edges(VertexId v,
                                   std::optional<LabelId> label = std::nullopt) const;

  // -- properties --
  void set_vertex_property(VertexId v, std::string_view name, const PropValue &value);
  std::optional<PropValue> get_vertex_property(VertexId v, std::string_view name) const;
  std::vector<NamedProp> vertex_properties(VertexId v) const;
  void set_edge_property(EdgeId e, std::string_view name, const PropValue &value);
  std::optional<PropValue> get_edge_property(EdgeId e, std::string_view name) const;
  std::vector<NamedProp> edge_properties(EdgeId e) const;

  // -- deletes --
  // Removes the local halves of one edge (outgoing under src and/or incoming
  // under tgt, whichever this shard owns) plus its properties.
  void delete_edge(EdgeId eid, VertexId src, VertexId tgt);
  // Removes the vertex row pair, its properties, both edge lists and the
  // properties of its outgoing edges, resolving locally owned halves in this
  // transaction. Returns the remote references still to be purged.
  std::vector<PurgeRef> delete_vertex_local(VertexId v);
  bool purge_outgoing_record(VertexId owner, VertexId deleted, LabelId label, EdgeId eid);
  bool purge_incoming_record(VertexId owner, VertexId deleted, LabelId label, EdgeId eid);

  // -- batches --
  struct BatchVerticesResult {
    std::vector<VertexId> ids;  // aligned with the input specs
    EdgeIdRange range;
  };
  BatchVerticesResult batch_add_vertices(const std::vector<VertexSpec> &specs,
                                         uint64_t edge_range_len);
  size_t batch_add_edges(const std::vector<BatchEdge> &records);

  void commit();
  void abort();
  bool is_open() const { return txn_.is_open(); }

  uint64_t max_vid() const { return max_vid_; }
  uint64_t max_eid() const { return max_eid_; }

  kv::Txn &kv_txn() { return txn_; }

 private:
  friend class GraphStore;
  GraphTxn(GraphStore *store, kv::Txn txn);

  uint32_t intern_prop_name(std::string_view name);
  std::optional<uint32_t> find_prop_name(std::string_view name) const;
  std::optional<std::string> prop_name_of(uint32_t pid) const;
  void set_property(kv::Db dup_db, uint64_t entity_key, std::string_view name,
                    const PropValue &value);
  std::optional<PropValue> get_property(kv::Db dup_db, uint64_t entity_key,
                                        std::string_view name) const;
  std::vector<NamedProp> all_properties(kv::Db dup_db, uint64_t entity_key) const;
  void drop_properties(kv::Db dup_db, uint64_t entity_key);
  void require_vertex(VertexId v) const;
  void flush_counters();

  GraphStore *store_;
  kv::Txn txn_;
  uint64_t max_vid_ = 0;
  uint64_t max_eid_ = 0;
  uint32_t max_label_ = 0;
  uint32_t max_pid_ = 0;
  bool counters_dirty_ = false;
};

class GraphStore {
 public:
  // `root` is a directory holding one subdirectory per graph.
  static std::unique_ptr<GraphStore> create(const std::string &root, const std::string &name,
                                            const GraphConfig &cfg = {});
  static std::unique_ptr<GraphStore> open(const std::string &root, const std::string &name,
                                          const GraphConfig &cfg = {});
  static void destroy(const std::string &root, const std::string &name);

  GraphTxn begin(kv::TxnMode mode);

  const std::string &name() const { return name_; }
  uint32_t shard_id() const { return cfg_.shard_id; }
  bool concat_prop_keys() const { return cfg_.concat_prop_keys; }
  uint64_t committed_txn_id() const { return env_->committed_txn_id(); }
  kv::Env &env() { return *env_; }

 private:
  friend class GraphTxn;
  GraphStore() = default;

  struct Dbs {
    kv::Db ex2i, i2ex, vi2e, vi2e_in, vid2pkv, eid2pkv, labels, props_interned, meta;
  };

  std::shared_ptr<kv::Env> env_;
  std::string name_;
  GraphConfig cfg_;
  Dbs dbs_;
};

}  // namespace shardgraph::graph
