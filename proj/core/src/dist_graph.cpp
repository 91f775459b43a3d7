#include "shardgraph/dist_graph.hpp"

namespace shardgraph::dist {

using wire::PayloadReader;
using wire::PayloadWriter;

void write_props(PayloadWriter &w, const std::vector<NamedProp> &props) {
  w.u32(static_cast<uint32_t>(props.size()));
  for (const NamedProp &p : props) {
    w.bytes(p.name);
    std::string enc;
    encode_prop_value(enc, p.value);
    w.bytes(enc);
  }
}

std::vector<NamedProp> read_props(PayloadReader &r) {
  uint32_t count = r.u32();
  std::vector<NamedProp> props;
  props.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedProp p;
    p.name = std::string(r.bytes());
    std::string_view enc = r.bytes();
    size_t pos = 0;
    p.value = decode_prop_value(enc, pos);
    props.push_back(std::move(p));
  }
  return props;
}

// ---- VertexCache ----

std::optional<VertexId> VertexCache::get(std::string_view ext) {
  std::lock_guard lk(mu_);
  auto it = map_.find(std::string(ext));
  if (it == map_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second.second);
  return it->second.first;
}

void VertexCache::put(std::string_view ext, VertexId vid) {
  std::lock_guard lk(mu_);
  std::string key(ext);
  auto it = map_.find(key);
  if (it != map_.end()) {
    it->second.first = vid;
    order_.splice(order_.begin(), order_, it->second.second);
    return;
  }
  order_.push_front(key);
  map_.emplace(std::move(key), std::make_pair(vid, order_.begin()));
  while (map_.size() > capacity_ && !order_.empty()) {
    map_.erase(order_.back());
    order_.pop_back();
  }
}

void VertexCache::erase(std::string_view ext) {
  std::lock_guard lk(mu_);
  auto it = map_.find(std::string(ext));
  if (it == map_.end()) return;
  order_.erase(it->second.second);
  map_.erase(it);
}

void VertexCache::clear() {
  std::lock_guard lk(mu_);
  map_.clear();
  order_.clear();
}

size_t VertexCache::size() const {
  std::lock_guard lk(mu_);
  return map_.size();
}

// ---- DistributedGraph ----

DistributedGraph::DistributedGraph(const ClusterView &cluster, rpc::RpcNode *node,
                                   ProxyOptions opts)
    : cluster_(cluster),
      node_(node),
      opts_(opts),
      vertex_cache_(opts.vertex_cache_capacity) {
  if (cluster_.shard_count() == 0)
    throw Error(ErrorCode::invalid_argument, "cluster has no shards");
}

LabelId DistributedGraph::resolve_label(const std::string &label) {
  if (label.empty()) throw Error(ErrorCode::invalid_label, "empty label");
  {
    std::lock_guard lk(label_mu_);
    auto it = label_cache_.find(label);
    if (it != label_cache_.end()) return it->second;
  }
  // Shard 0 is the label interning authority; ids are global.
  PayloadWriter w;
  w.bytes(label);
  std::string resp = node_->call(0, wire::kOpCheckOrCreateLabel, w.take());
  PayloadReader r(resp);
  LabelId id = r.u8();
  std::lock_guard lk(label_mu_);
  label_cache_[label] = id;
  return id;
}

VertexId DistributedGraph::resolve_or_create(const std::string &ext, LabelId label,
                                             const std::string &label_name) {
  if (opts_.vertex_cache_enabled) {
    auto hit = vertex_cache_.get(ext);
    if (hit) return *hit;
  }
  PayloadWriter w;
  w.bytes(ext).u8(label).bytes(label_name);
  std::string resp = node_->call(shard_of(ext), wire::kOpCheckOrCreateVertex, w.take());
  PayloadReader r(resp);
  VertexId vid = r.u64();
  if (opts_.vertex_cache_enabled) vertex_cache_.put(ext, vid);
  return vid;
}

VertexId DistributedGraph::add_vertex(const std::string &ext, const std::string &label,
                                      const std::vector<NamedProp> &props) {
  LabelId lid = resolve_label(label);
  PayloadWriter w;
  w.bytes(ext).u8(lid).bytes(label);
  write_props(w, props);
  std::string resp = node_->call(shard_of(ext), wire::kOpAddVertex, w.take());
  PayloadReader r(resp);
  VertexId vid = r.u64();
  if (opts_.vertex_cache_enabled) vertex_cache_.put(ext, vid);
  return vid;
}

std::optional<VertexId> DistributedGraph::get_vertex(const std::string &ext) {
  if (opts_.vertex_cache_enabled) {
    auto hit = vertex_cache_.get(ext);
    if (hit) return *hit;
  }
  PayloadWriter w;
  w.bytes(ext);
  std::string resp = node_->call(shard_of(ext), wire::kOpFindVertex, w.take());
  PayloadReader r(resp);
  if (r.u8() == 0) return std::nullopt;
  VertexId vid = r.u64();
  if (opts_.vertex_cache_enabled) vertex_cache_.put(ext, vid);
  return vid;
}

EdgeId DistributedGraph::add_edge_sync(const std::string &src_ext, const std::string &label,
                                       const std::string &tgt_ext,
                                       const std::vector<NamedProp> &props, bool confirm) {
  LabelId lid = resolve_label(label);  // local cache; no messages when warm

  // A failed step aborts the rest; the error names the steps that already
  // committed since there is no cross-shard rollback.
  const char *committed = "nothing";
  auto step_error = [&](const Error &e, const char *step) -> Error {
    return Error(e.code(), std::string(step) + " failed after " + committed +
                               " committed: " + e.what());
  };

  VertexId vidt, vids;
  try {
    vidt = resolve_or_create(tgt_ext, lid, label);
  } catch (const Error &e) {
    throw step_error(e, "resolve target");
  }
  committed = "target vertex";
  try {
    vids = resolve_or_create(src_ext, lid, label);
  } catch (const Error &e) {
    throw step_error(e, "resolve source");
  }
  committed = "both vertices";

  EdgeId eid;
  try {
    PayloadWriter out;
    out.u64(vids).u64(vidt).u8(lid).bytes(label).u8(0).u64(0);
    write_props(out, props);
    std::string resp = node_->call(shard_of(src_ext), wire::kOpAddOutgoingEdge, out.take());
    PayloadReader r(resp);
    eid = r.u64();
  } catch (const Error &e) {
    throw step_error(e, "outgoing edge");
  }
  committed = "both vertices and the outgoing edge";

  try {
    PayloadWriter in;
    in.u64(vidt).u64(vids).u64(eid).u8(lid).bytes(label);
    if (confirm)
      node_->call(shard_of(tgt_ext), wire::kOpAddIncomingEdge, in.take());
    else
      node_->send_oneway(shard_of(tgt_ext), wire::kOpAddIncomingEdge, in.take());
  } catch (const Error &e) {
    throw step_error(e, "incoming edge");
  }
  return eid;
}

rpc::HandlePtr DistributedGraph::add_edge_async(const std::string &src_ext,
                                                const std::string &label,
                                                const std::string &tgt_ext,
                                                const std::vector<NamedProp> &props,
                                                bool confirm) {
  LabelId lid = resolve_label(label);
  PayloadWriter w;
  w.bytes(src_ext).bytes(tgt_ext).u8(lid).bytes(label);
  write_props(w, props);
  w.u8(confirm ? 1 : 0);
  uint32_t target_shard = shard_of(tgt_ext);
  if (confirm)
    return node_->send_oneway_with_completion(target_shard, wire::kOpAsyncEdgeResolveTarget,
                                              w.take());
  node_->send_oneway(target_shard, wire::kOpAsyncEdgeResolveTarget, w.take());
  // Nothing will come back; report completion at enqueue with no edge id.
  auto handle = std::make_shared<rpc::CompletionHandle>();
  PayloadWriter ack;
  ack.u64(0);
  handle->complete(wire::ok_response(ack.take()));
  return handle;
}

EdgeId DistributedGraph::edge_id_from_ack(const std::string &ack_body) {
  PayloadReader r(ack_body);
  return r.u64();
}

rpc::HandlePtr DistributedGraph::get_all_edges_async(uint32_t shard,
                                                     const std::vector<VertexId> &vids) {
  PayloadWriter w;
  w.u32(static_cast<uint32_t>(vids.size()));
  for (VertexId v : vids) w.u64(v);
  return node_->call_async(shard, wire::kOpGetAllEdges, w.take());
}

DistributedGraph::EdgesReply DistributedGraph::parse_edges_reply(const std::string &body) {
  PayloadReader r(body);
  EdgesReply reply;
  uint32_t count = r.u32();
  reply.edges.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    WireEdge e;
    e.src = r.u64();
    e.tgt = r.u64();
    e.label = r.u8();
    e.edge = r.u64();
    reply.edges.push_back(e);
  }
  reply.server_micros = r.u64();
  return reply;
}

std::vector<WireEdge> DistributedGraph::get_out_edges(const std::string &ext) {
  PayloadWriter w;
  w.bytes(ext);
  std::string resp = node_->call(shard_of(ext), wire::kOpGetOutEdges, w.take());
  return parse_edges_reply(resp).edges;
}

void DistributedGraph::set_vertex_property(const std::string &ext, const std::string &name,
                                           const PropValue &value) {
  PayloadWriter w;
  w.bytes(ext).bytes(name);
  std::string enc;
  encode_prop_value(enc, value);
  w.bytes(enc);
  node_->call(shard_of(ext), wire::kOpSetVertexProp, w.take());
}

std::optional<PropValue> DistributedGraph::get_vertex_property(const std::string &ext,
                                                               const std::string &name) {
  PayloadWriter w;
  w.bytes(ext).bytes(name);
  std::string resp = node_->call(shard_of(ext), wire::kOpGetVertexProp, w.take());
  PayloadReader r(resp);
  if (r.u8() == 0) return std::nullopt;
  std::string_view enc = r.bytes();
  size_t pos = 0;
  return decode_prop_value(enc, pos);
}

void DistributedGraph::set_edge_property(EdgeId eid, const std::string &src_ext,
                                         const std::string &name, const PropValue &value) {
  // Edge properties live on the shard of the source vertex.
  PayloadWriter w;
  w.u64(eid).bytes(name);
  std::string enc;
  encode_prop_value(enc, value);
  w.bytes(enc);
  node_->call(shard_of(src_ext), wire::kOpSetEdgeProp, w.take());
}

std::optional<PropValue> DistributedGraph::get_edge_property(EdgeId eid,
                                                             const std::string &src_ext,
                                                             const std::string &name) {
  PayloadWriter w;
  w.u64(eid).bytes(name);
  std::string resp = node_->call(shard_of(src_ext), wire::kOpGetEdgeProp, w.take());
  PayloadReader r(resp);
  if (r.u8() == 0) return std::nullopt;
  std::string_view enc = r.bytes();
  size_t pos = 0;
  return decode_prop_value(enc, pos);
}

void DistributedGraph::delete_vertex(const std::string &ext) {
  PayloadWriter w;
  w.bytes(ext);
  std::string resp = node_->call(shard_of(ext), wire::kOpDeleteVertex, w.take());
  vertex_cache_.erase(ext);
  PayloadReader r(resp);
  VertexId deleted = r.u64();
  uint32_t nrefs = r.u32();
  for (uint32_t i = 0; i < nrefs; ++i) {
    VertexId neighbor = r.u64();
    LabelId label = r.u8();
    EdgeId eid = r.u64();
    uint8_t purge_outgoing = r.u8();
    PayloadWriter purge;
    purge.u64(neighbor).u64(deleted).u8(label).u64(eid).u8(purge_outgoing);
    node_->send_oneway(vertex_shard(neighbor), wire::kOpPurgeEdge, purge.take());
  }
}

void DistributedGraph::delete_edge(EdgeId eid, const std::string &src_ext,
                                   const std::string &tgt_ext) {
  auto src = get_vertex(src_ext);
  auto tgt = get_vertex(tgt_ext);
  if (!src || !tgt) throw Error(ErrorCode::vertex_not_found, "edge endpoints not found");
  PayloadWriter w;
  w.u64(eid).u64(*src).u64(*tgt);
  std::string payload = w.take();
  uint32_t src_shard = shard_of(src_ext);
  uint32_t tgt_shard = shard_of(tgt_ext);
  node_->call(src_shard, wire::kOpDeleteEdgeHalf, payload);
  if (tgt_shard != src_shard) node_->call(tgt_shard, wire::kOpDeleteEdgeHalf, payload);
}

void DistributedGraph::flush_vertex_cache() { vertex_cache_.clear(); }

void DistributedGraph::set_vertex_cache_enabled(bool enabled) {
  opts_.vertex_cache_enabled = enabled;
  if (!enabled) vertex_cache_.clear();
}

std::vector<std::string> DistributedGraph::resolve_externals(
    const std::vector<VertexId> &vids) {
  // Group by owning shard (recoverable from the id bits), one request each.
  std::vector<std::vector<uint32_t>> index_by_shard(shard_count());
  for (uint32_t i = 0; i < vids.size(); ++i)
    index_by_shard[vertex_shard(vids[i])].push_back(i);
  std::vector<std::string> out(vids.size());
  for (uint32_t s = 0; s < shard_count(); ++s) {
    if (index_by_shard[s].empty()) continue;
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(index_by_shard[s].size()));
    for (uint32_t idx : index_by_shard[s]) w.u64(vids[idx]);
    std::string resp = node_->call(s, wire::kOpResolveVids, w.take());
    PayloadReader r(resp);
    uint32_t count = r.u32();
    if (count != index_by_shard[s].size())
      throw Error(ErrorCode::decode_error, "resolve_vids count mismatch");
    for (uint32_t k = 0; k < count; ++k) out[index_by_shard[s][k]] = std::string(r.bytes());
  }
  return out;
}

}  // namespace shardgraph::dist
