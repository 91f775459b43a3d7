#pragma once

// Full-graph dump in a canonical sorted text form, used to compare final
// states across ingest modes and shard counts. Edge ids are replaced by
// pair-local ordinals so dumps from different runs line up; the raw tuples
// stay available for the edge-pairing check.

#include <cstdint>
#include <string>
#include <vector>

#include "shardgraph/ids.hpp"
#include "shardgraph/props.hpp"
#include "shardgraph/rpc.hpp"

namespace shardgraph::dump {

struct DumpVertex {
  std::string ext;
  VertexId vid = 0;
  std::string label;
  std::vector<NamedProp> props;
};

struct DumpOutEdge {
  VertexId src = 0;
  VertexId tgt = 0;
  std::string label;
  EdgeId eid = 0;
  std::vector<NamedProp> props;
};

struct DumpInEdge {
  VertexId tgt = 0;
  VertexId src = 0;
  LabelId label = 0;
  EdgeId eid = 0;
};

struct GraphDump {
  std::vector<DumpVertex> vertices;
  std::vector<DumpOutEdge> out_edges;
  std::vector<DumpInEdge> in_edges;
};

// Parses one shard's kOpDumpShard response body into `into`.
void parse_shard_dump(const std::string &body, GraphDump &into);

// Collects the dump of every shard in the cluster.
GraphDump collect_cluster_dump(rpc::RpcNode &node, uint32_t shard_count);

// One line per vertex and per outgoing edge, tab-separated, sorted; edge ids
// canonicalized per (src, tgt) pair.
std::string canonical_text(const GraphDump &dump);

// Multiset equality of (src, tgt, eid) between outgoing and incoming
// records; returns the number of unpaired tuples.
uint64_t pairing_violations(const GraphDump &dump);

}  // namespace shardgraph::dump
