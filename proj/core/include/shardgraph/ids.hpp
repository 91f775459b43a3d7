#pragma once

#include <cstdint>

namespace shardgraph {

// Packed 64-bit identifiers. A vertex id is {label, shard, local counter};
// an edge id is {allocating shard, local counter} with the shard in the most
// significant bits. Field widths are compile-time constants: 12 shard bits
// give 4096 shards, 8 label bits give 255 distinct labels per graph.

inline constexpr int kLabelBits = 8;
inline constexpr int kShardBits = 12;
inline constexpr int kVertexCounterBits = 64 - kLabelBits - kShardBits;  // 44
inline constexpr int kEdgeCounterBits = 64 - kShardBits;                 // 52

inline constexpr uint64_t kMaxLabelId = (1ull << kLabelBits) - 1;
inline constexpr uint64_t kMaxShardId = (1ull << kShardBits) - 1;
inline constexpr uint64_t kMaxVertexCounter = (1ull << kVertexCounterBits) - 1;
inline constexpr uint64_t kMaxEdgeCounter = (1ull << kEdgeCounterBits) - 1;

using VertexId = uint64_t;
using EdgeId = uint64_t;
using LabelId = uint8_t;

inline constexpr VertexId pack_vertex_id(LabelId label, uint32_t shard, uint64_t counter) {
  return (static_cast<uint64_t>(label) << (kShardBits + kVertexCounterBits)) |
         (static_cast<uint64_t>(shard & kMaxShardId) << kVertexCounterBits) |
         (counter & kMaxVertexCounter);
}

inline constexpr LabelId vertex_label(VertexId v) {
  return static_cast<LabelId>(v >> (kShardBits + kVertexCounterBits));
}

inline constexpr uint32_t vertex_shard(VertexId v) {
  return static_cast<uint32_t>((v >> kVertexCounterBits) & kMaxShardId);
}

inline constexpr uint64_t vertex_counter(VertexId v) { return v & kMaxVertexCounter; }

inline constexpr EdgeId pack_edge_id(uint32_t shard, uint64_t counter) {
  return (static_cast<uint64_t>(shard & kMaxShardId) << kEdgeCounterBits) |
         (counter & kMaxEdgeCounter);
}

inline constexpr uint32_t edge_shard(EdgeId e) {
  return static_cast<uint32_t>(e >> kEdgeCounterBits);
}

inline constexpr uint64_t edge_counter(EdgeId e) { return e & kMaxEdgeCounter; }

// One edge stored under its source vertex (outgoing) or target (incoming).
struct EdgeRecord {
  VertexId other = 0;  // target for outgoing records, source for incoming
  LabelId label = 0;
  EdgeId edge = 0;

  friend bool operator==(const EdgeRecord &, const EdgeRecord &) = default;
};

}  // namespace shardgraph
