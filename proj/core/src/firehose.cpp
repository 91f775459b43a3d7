#include "shardgraph/firehose.hpp"

#include <chrono>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace shardgraph::dist {

using wire::PayloadReader;
using wire::PayloadWriter;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Firehose::Firehose(DistributedGraph *dg, FirehoseOptions opts)
    : dg_(dg),
      opts_(opts),
      shard_count_(dg->shard_count()),
      active_(std::make_unique<BatchSet>(shard_count_)),
      standby_(std::make_unique<BatchSet>(shard_count_)),
      mapping_cache_(1'000'000) {}

Firehose::~Firehose() {
  try {
    if (!closed_) close();
  } catch (...) {
  }
}

void Firehose::submit_edge(PendingEdge edge) {
  if (edge.label.empty()) edge.label = opts_.default_edge_label;
  bool trigger = false;
  {
    std::lock_guard lk(mu_);
    if (closed_) throw Error(ErrorCode::invalid_argument, "firehose is closed");
    uint32_t idx = static_cast<uint32_t>(active_->edges.size());
    active_->out_by_shard[dg_->shard_of(edge.src)].push_back(idx);
    active_->in_by_shard[dg_->shard_of(edge.tgt)].push_back(idx);
    active_->edges.push_back(std::move(edge));
    trigger = active_->edges.size() >= opts_.batch_size;
  }
  if (trigger) auto_reports_.push_back(flush());
}

void Firehose::submit_vertex(PendingVertex vertex) {
  if (vertex.label.empty()) vertex.label = opts_.default_edge_label;
  bool trigger = false;
  {
    std::lock_guard lk(mu_);
    if (closed_) throw Error(ErrorCode::invalid_argument, "firehose is closed");
    active_->vertices_by_shard[dg_->shard_of(vertex.ext)].push_back(std::move(vertex));
    active_->vertex_count++;
    trigger = active_->edges.size() + active_->vertex_count >= opts_.batch_size;
  }
  if (trigger) auto_reports_.push_back(flush());
}

std::vector<FlushReport> Firehose::drain_auto_reports() {
  std::vector<FlushReport> out;
  out.swap(auto_reports_);
  return out;
}

FlushReport Firehose::flush() {
  // Swap the double buffer: the set being drained is never appended to.
  BatchSet *draining;
  {
    std::lock_guard lk(mu_);
    std::swap(active_, standby_);
    draining = standby_.get();
  }
  FlushReport report = flush_set(*draining);
  *draining = BatchSet(shard_count_);
  return report;
}

FlushReport Firehose::close() {
  FlushReport last = flush();
  std::lock_guard lk(mu_);
  closed_ = true;
  return last;
}

FlushReport Firehose::flush_set(BatchSet &set) {
  auto t0 = std::chrono::steady_clock::now();
  FlushReport report;
  report.edges_submitted = set.edges.size();
  report.vertices_submitted = set.vertex_count;
  report.shards.resize(shard_count_);
  if (set.empty()) {
    report.millis = ms_since(t0);
    return report;
  }

  // Label strings are interned once through the proxy cache before tuples
  // are materialized.
  std::unordered_map<std::string, LabelId> labels;
  for (const PendingEdge &e : set.edges)
    if (!labels.count(e.label)) labels[e.label] = dg_->resolve_label(e.label);
  for (uint32_t s = 0; s < shard_count_; ++s)
    for (const PendingVertex &v : set.vertices_by_shard[s])
      if (!labels.count(v.label)) labels[v.label] = dg_->resolve_label(v.label);

  // Phase 1, parallel per shard: one bulk vertex request collecting the
  // distinct uncached externals plus directly submitted vertices, returning
  // internal ids and a reserved edge-id range sized to this shard's outgoing
  // queue.
  struct ShardPlan {
    std::vector<std::string> externals;  // order matches the request
    std::vector<LabelId> label_ids;
    std::vector<std::string> label_names;
    std::vector<std::vector<NamedProp>> props;
    std::unordered_map<std::string, uint32_t> index_of;
    graph::EdgeIdRange range;
    std::unordered_map<std::string, VertexId> resolved;
  };
  std::vector<ShardPlan> plans(shard_count_);

  for (uint32_t s = 0; s < shard_count_; ++s) {
    ShardPlan &plan = plans[s];
    auto add_external = [&](const std::string &ext, const std::string &label,
                            std::vector<NamedProp> props) {
      auto it = plan.index_of.find(ext);
      if (it != plan.index_of.end()) {
        if (!props.empty()) {
          auto &dst = plan.props[it->second];
          dst.insert(dst.end(), props.begin(), props.end());
        }
        return;
      }
      if (props.empty() && opts_.cache_mappings) {
        auto hit = mapping_cache_.get(ext);
        if (hit) {
          plan.resolved[ext] = *hit;
          return;  // cached mapping: no need to send this endpoint
        }
      }
      plan.index_of[ext] = static_cast<uint32_t>(plan.externals.size());
      plan.externals.push_back(ext);
      plan.label_ids.push_back(labels.count(label) ? labels[label] : 0);
      plan.label_names.push_back(label);
      plan.props.push_back(std::move(props));
    };
    for (const PendingVertex &v : set.vertices_by_shard[s]) add_external(v.ext, v.label, v.props);
    for (uint32_t idx : set.out_by_shard[s])
      add_external(set.edges[idx].src, set.edges[idx].label, {});
    for (uint32_t idx : set.in_by_shard[s])
      add_external(set.edges[idx].tgt, set.edges[idx].label, {});
  }

  auto phase1 = [&](uint32_t s) {
    ShardPlan &plan = plans[s];
    ShardFlushStats &stats = report.shards[s];
    stats.shard = s;
    auto ts = std::chrono::steady_clock::now();
    uint64_t range_len = set.out_by_shard[s].size();
    if (plan.externals.empty() && range_len == 0) {
      stats.millis += ms_since(ts);
      return;
    }
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(plan.externals.size()));
    for (uint32_t i = 0; i < plan.externals.size(); ++i) {
      w.bytes(plan.externals[i]).u8(plan.label_ids[i]).bytes(plan.label_names[i]);
      write_props(w, plan.props[i]);
    }
    w.u64(range_len);
    try {
      std::string resp = dg_->node().call(s, wire::kOpBulkVertices, w.take());
      stats.vertex_request_sent = true;
      stats.vertices_sent = plan.externals.size();
      PayloadReader r(resp);
      uint32_t count = r.u32();
      if (count != plan.externals.size())
        throw Error(ErrorCode::decode_error, "bulk vertex count mismatch");
      for (uint32_t i = 0; i < count; ++i) {
        VertexId vid = r.u64();
        plan.resolved[plan.externals[i]] = vid;
        if (opts_.cache_mappings) mapping_cache_.put(plan.externals[i], vid);
      }
      plan.range.shard = s;
      plan.range.begin = r.u64();
      plan.range.end = r.u64();
      stats.range = plan.range;
    } catch (const Error &e) {
      stats.failed = true;
      stats.error = e.what();
    }
    stats.millis += ms_since(ts);
  };

  {
    std::vector<std::thread> threads;
    for (uint32_t s = 0; s < shard_count_; ++s) threads.emplace_back(phase1, s);
    for (auto &t : threads) t.join();
  }

  // Assign edge ids from the source shard's reserved range, in queue order.
  // Edges touching a failed shard are dropped whole so no unpaired half is
  // ever written; phase 2 threads only read edge_ok.
  std::vector<EdgeId> eid_of(set.edges.size(), 0);
  std::vector<char> edge_ok(set.edges.size(), 1);
  for (uint32_t idx = 0; idx < set.edges.size(); ++idx) {
    const PendingEdge &e = set.edges[idx];
    if (report.shards[dg_->shard_of(e.src)].failed ||
        report.shards[dg_->shard_of(e.tgt)].failed)
      edge_ok[idx] = 0;
  }
  for (uint32_t s = 0; s < shard_count_; ++s) {
    const ShardPlan &plan = plans[s];
    uint64_t next = plan.range.begin;
    for (uint32_t idx : set.out_by_shard[s]) {
      if (edge_ok[idx]) eid_of[idx] = next++;
    }
  }
  auto lookup = [&](uint32_t shard, const std::string &ext, VertexId &out) {
    const ShardPlan &plan = plans[shard];
    auto it = plan.resolved.find(ext);
    if (it == plan.resolved.end()) return false;
    out = it->second;
    return true;
  };

  // Phase 2, parallel per shard: one bulk edge request carrying this shard's
  // outgoing tuples (with properties) and incoming tuples, all internal ids.
  auto phase2 = [&](uint32_t s) {
    ShardFlushStats &stats = report.shards[s];
    auto ts = std::chrono::steady_clock::now();
    PayloadWriter w;
    uint32_t count = 0;
    std::string body;
    {
      PayloadWriter records;
      for (uint32_t idx : set.out_by_shard[s]) {
        if (!edge_ok[idx]) continue;
        const PendingEdge &e = set.edges[idx];
        VertexId src, tgt;
        if (!lookup(s, e.src, src) || !lookup(dg_->shard_of(e.tgt), e.tgt, tgt)) continue;
        records.u64(src).u64(tgt).u8(labels[e.label]).bytes(e.label).u64(eid_of[idx]).u8(0);
        write_props(records, e.props);
        ++count;
        ++stats.out_edges;
      }
      for (uint32_t idx : set.in_by_shard[s]) {
        if (!edge_ok[idx]) continue;
        const PendingEdge &e = set.edges[idx];
        VertexId src, tgt;
        if (!lookup(dg_->shard_of(e.src), e.src, src) || !lookup(s, e.tgt, tgt)) continue;
        records.u64(tgt).u64(src).u8(labels[e.label]).bytes(e.label).u64(eid_of[idx]).u8(1);
        write_props(records, {});
        ++count;
        ++stats.in_edges;
      }
      body = records.take();
    }
    if (count == 0) {
      stats.millis += ms_since(ts);
      return;
    }
    w.u32(count).raw(body);
    try {
      dg_->node().call(s, wire::kOpBulkEdges, w.take());
      stats.edge_request_sent = true;
    } catch (const Error &e) {
      stats.failed = true;
      stats.error = e.what();
    }
    stats.millis += ms_since(ts);
  };

  {
    std::vector<std::thread> threads;
    for (uint32_t s = 0; s < shard_count_; ++s) threads.emplace_back(phase2, s);
    for (auto &t : threads) t.join();
  }

  for (uint32_t idx = 0; idx < set.edges.size(); ++idx)
    if (!edge_ok[idx]) ++report.edges_failed;
  report.millis = ms_since(t0);
  return report;
}

}  // namespace shardgraph::dist
