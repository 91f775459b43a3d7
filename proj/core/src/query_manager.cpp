#include "shardgraph/query_manager.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

namespace shardgraph::qm {

using dist::DistributedGraph;
using rpc::ReplyContext;
using wire::PayloadReader;
using wire::PayloadWriter;

namespace {

uint64_t now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

BfsResult bfs_fixed_depth(DistributedGraph &dg, const std::string &start_ext,
                          uint32_t max_depth, const BfsOptions &opts) {
  auto start = dg.get_vertex(start_ext);
  if (!start) throw Error(ErrorCode::start_not_found, "no vertex " + start_ext);

  uint32_t shards = dg.shard_count();
  PartitionedFrontier frontier(shards);
  std::unordered_set<VertexId> visited;
  frontier.insert(*start);
  visited.insert(*start);

  BfsResult result;
  uint32_t depth = 0;
  while (depth < max_depth && frontier.size() > 0) {
    BfsLevelTiming timing;
    uint64_t t0 = now_us();

    // Post one asynchronous adjacency request per non-empty shard bucket.
    std::vector<std::pair<uint32_t, rpc::HandlePtr>> handles;
    for (uint32_t nid = 0; nid < frontier.locations(); ++nid) {
      std::vector<VertexId> &curr = frontier.bucket(nid);
      if (!curr.empty()) handles.emplace_back(nid, dg.get_all_edges_async(nid, curr));
    }
    timing.issue_us = now_us() - t0;

    // Wait for replies, then fold each into the next frontier.
    PartitionedFrontier next(shards);
    uint64_t wait_us = 0, process_us = 0, max_remote_us = 0;
    for (auto &[nid, handle] : handles) {
      uint64_t w0 = now_us();
      while (!handle->done()) dg.poll();
      wait_us += now_us() - w0;

      uint64_t p0 = now_us();
      std::string body;
      try {
        body = handle->take();
      } catch (const Error &e) {
        throw Error(ErrorCode::shard_unreachable,
                    "shard " + std::to_string(nid) + ": " + e.what());
      }
      DistributedGraph::EdgesReply reply = DistributedGraph::parse_edges_reply(body);
      max_remote_us = std::max(max_remote_us, reply.server_micros);
      for (const dist::WireEdge &e : reply.edges) {
        ++result.edges_traversed;
        if (visited.insert(e.tgt).second) next.insert(e.tgt);
      }
      process_us += now_us() - p0;
    }
    // The remote share is bounded by what we actually spent waiting so the
    // four phases never sum past the level wall time.
    timing.remote_us = std::min(max_remote_us, wait_us);
    timing.transfer_us = wait_us - timing.remote_us;
    timing.process_us = process_us;
    result.levels.push_back(timing);

    frontier = std::move(next);
    ++depth;
  }

  result.visited.assign(visited.begin(), visited.end());
  std::sort(result.visited.begin(), result.visited.end());
  if (opts.resolve_externals) result.externals = dg.resolve_externals(result.visited);
  return result;
}

// ---- QueryManager ----

QueryManager::QueryManager(ClusterView cluster, QmOptions opts)
    : cluster_(std::move(cluster)), opts_(opts) {}

QueryManager::~QueryManager() { stop(); }

void QueryManager::start() {
  pool_ = std::make_unique<rt::TaskPool>(opts_.pool_workers);
  node_ = std::make_unique<rpc::RpcNode>(cluster_, static_cast<int>(cluster_.qm_node()),
                                         pool_.get());
  dg_ = std::make_unique<DistributedGraph>(cluster_, node_.get(), opts_.proxy);
  register_handlers();
  node_->start();
}

void QueryManager::stop() {
  {
    std::lock_guard lk(shutdown_mu_);
    shutdown_requested_ = true;
  }
  shutdown_cv_.notify_all();
  if (node_) node_->stop();
  if (pool_) pool_->shutdown();
}

void QueryManager::wait_for_shutdown() {
  std::unique_lock lk(shutdown_mu_);
  shutdown_cv_.wait(lk, [&] { return shutdown_requested_; });
}

void QueryManager::register_handlers() {
  rpc::RpcNode &node = *node_;

  node.register_handler(wire::kOpQmBfs, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string start(r.bytes());
    uint32_t depth = r.u32();
    bool resolve = r.u8() != 0;
    BfsOptions opts;
    opts.resolve_externals = resolve;
    BfsResult res = bfs_fixed_depth(*dg_, start, depth, opts);
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(res.visited.size()));
    for (VertexId v : res.visited) w.u64(v);
    w.u64(res.edges_traversed);
    w.u32(static_cast<uint32_t>(res.levels.size()));
    for (const BfsLevelTiming &t : res.levels)
      w.u64(t.issue_us).u64(t.remote_us).u64(t.transfer_us).u64(t.process_us);
    w.u8(resolve ? 1 : 0);
    if (resolve)
      for (const std::string &ext : res.externals) w.bytes(ext);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpQmAddVertex, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    std::string label(r.bytes());
    auto props = dist::read_props(r);
    VertexId vid = dg_->add_vertex(ext, label, props);
    PayloadWriter w;
    w.u64(vid);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpQmAddEdge, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string src(r.bytes());
    std::string label(r.bytes());
    std::string tgt(r.bytes());
    auto props = dist::read_props(r);
    // Client add-edge rides the asynchronous protocol with confirmation.
    rpc::HandlePtr h = dg_->add_edge_async(src, label, tgt, props, true);
    EdgeId eid = DistributedGraph::edge_id_from_ack(h->take());
    PayloadWriter w;
    w.u64(eid);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpQmGetVertex, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    auto vid = dg_->get_vertex(ext);
    PayloadWriter w;
    w.u8(vid ? 1 : 0).u64(vid ? *vid : 0);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpQmSetVertexProp, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    std::string name(r.bytes());
    std::string enc(r.bytes());
    size_t pos = 0;
    dg_->set_vertex_property(ext, name, decode_prop_value(enc, pos));
    ctx.reply({});
  });

  node.register_handler(wire::kOpQmGetVertexProp, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    std::string name(r.bytes());
    auto value = dg_->get_vertex_property(ext, name);
    PayloadWriter w;
    if (value) {
      std::string enc;
      encode_prop_value(enc, *value);
      w.u8(1).bytes(enc);
    } else {
      w.u8(0).bytes({});
    }
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpPing, [](PayloadReader &, ReplyContext &ctx) { ctx.reply({}); });

  node.register_handler(wire::kOpCountersGet, [this](PayloadReader &, ReplyContext &ctx) {
    rpc::MessageCounters snap = node_->counters_snapshot();
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(snap.per_opcode.size()));
    for (const auto &[op, c] : snap.per_opcode) w.u16(op).u64(c.sent).u64(c.received);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpCountersReset, [this](PayloadReader &, ReplyContext &ctx) {
    node_->counters_reset();
    ctx.reply({});
  });

  node.register_handler(wire::kOpShutdown, [this](PayloadReader &, ReplyContext &ctx) {
    ctx.reply({});
    std::lock_guard lk(shutdown_mu_);
    shutdown_requested_ = true;
    shutdown_cv_.notify_all();
  });
}

// ---- QmClient ----

QmClient::QmClient(ClusterView cluster) : cluster_(std::move(cluster)) {
  node_ = std::make_unique<rpc::RpcNode>(cluster_, -1, nullptr);
}

QmClient::~QmClient() {
  if (node_) node_->stop();
}

BfsResult QmClient::bfs(const std::string &start_ext, uint32_t depth, bool resolve) {
  PayloadWriter w;
  w.bytes(start_ext).u32(depth).u8(resolve ? 1 : 0);
  std::string resp = node_->call(cluster_.qm_node(), wire::kOpQmBfs, w.take());
  PayloadReader r(resp);
  BfsResult res;
  uint32_t nv = r.u32();
  res.visited.reserve(nv);
  for (uint32_t i = 0; i < nv; ++i) res.visited.push_back(r.u64());
  res.edges_traversed = r.u64();
  uint32_t nl = r.u32();
  for (uint32_t i = 0; i < nl; ++i) {
    BfsLevelTiming t;
    t.issue_us = r.u64();
    t.remote_us = r.u64();
    t.transfer_us = r.u64();
    t.process_us = r.u64();
    res.levels.push_back(t);
  }
  if (r.u8() != 0)
    for (uint32_t i = 0; i < nv; ++i) res.externals.emplace_back(r.bytes());
  return res;
}

VertexId QmClient::add_vertex(const std::string &ext, const std::string &label,
                              const std::vector<NamedProp> &props) {
  PayloadWriter w;
  w.bytes(ext).bytes(label);
  dist::write_props(w, props);
  std::string resp = node_->call(cluster_.qm_node(), wire::kOpQmAddVertex, w.take());
  PayloadReader r(resp);
  return r.u64();
}

EdgeId QmClient::add_edge(const std::string &src, const std::string &label,
                          const std::string &tgt, const std::vector<NamedProp> &props) {
  PayloadWriter w;
  w.bytes(src).bytes(label).bytes(tgt);
  dist::write_props(w, props);
  std::string resp = node_->call(cluster_.qm_node(), wire::kOpQmAddEdge, w.take());
  PayloadReader r(resp);
  return r.u64();
}

std::optional<VertexId> QmClient::get_vertex(const std::string &ext) {
  PayloadWriter w;
  w.bytes(ext);
  std::string resp = node_->call(cluster_.qm_node(), wire::kOpQmGetVertex, w.take());
  PayloadReader r(resp);
  if (r.u8() == 0) return std::nullopt;
  return r.u64();
}

void QmClient::set_vertex_property(const std::string &ext, const std::string &name,
                                   const PropValue &value) {
  PayloadWriter w;
  w.bytes(ext).bytes(name);
  std::string enc;
  encode_prop_value(enc, value);
  w.bytes(enc);
  node_->call(cluster_.qm_node(), wire::kOpQmSetVertexProp, w.take());
}

std::optional<PropValue> QmClient::get_vertex_property(const std::string &ext,
                                                       const std::string &name) {
  PayloadWriter w;
  w.bytes(ext).bytes(name);
  std::string resp = node_->call(cluster_.qm_node(), wire::kOpQmGetVertexProp, w.take());
  PayloadReader r(resp);
  if (r.u8() == 0) return std::nullopt;
  std::string_view enc = r.bytes();
  size_t pos = 0;
  return decode_prop_value(enc, pos);
}

}  // namespace shardgraph::qm
