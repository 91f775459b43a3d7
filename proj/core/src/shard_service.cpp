#include "shardgraph/shard_service.hpp"

#include <chrono>
#include <iostream>

#include "shardgraph/bytes.hpp"

namespace shardgraph::dist {

using graph::GraphTxn;
using rpc::ReplyContext;
using wire::PayloadReader;
using wire::PayloadWriter;

// ---- WriteQueue ----

WriteQueue::WriteQueue(graph::GraphStore &store, size_t max_group)
    : store_(store), max_group_(max_group) {
  thread_ = std::thread([this] { loop(); });
}

WriteQueue::~WriteQueue() { shutdown(); }

void WriteQueue::submit(WriteOp op) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) throw Error(ErrorCode::invalid_argument, "write queue stopped");
    q_.push_back(std::move(op));
  }
  cv_.notify_one();
}

void WriteQueue::shutdown() {
  {
    std::lock_guard lk(mu_);
    if (stopping_) {
      if (thread_.joinable()) thread_.join();
      return;
    }
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void WriteQueue::loop() {
  while (true) {
    std::vector<WriteOp> group;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return stopping_ || !q_.empty(); });
      if (q_.empty() && stopping_) return;
      while (!q_.empty() && group.size() < max_group_) {
        group.push_back(std::move(q_.front()));
        q_.pop_front();
      }
    }
    std::vector<std::exception_ptr> results(group.size(), nullptr);
    bool committed = false;
    try {
      GraphTxn txn = store_.begin(kv::TxnMode::read_write);
      for (size_t i = 0; i < group.size(); ++i) {
        try {
          group[i].work(txn);
        } catch (...) {
          // Operations validate before writing, so a failed one left no
          // partial state behind; the rest of the group proceeds.
          results[i] = std::current_exception();
        }
      }
      txn.commit();
      committed = true;
    } catch (...) {
    }
    if (!committed) {
      // Group commit failed; isolate by retrying each operation alone.
      for (size_t i = 0; i < group.size(); ++i) {
        results[i] = nullptr;
        try {
          GraphTxn txn = store_.begin(kv::TxnMode::read_write);
          group[i].work(txn);
          txn.commit();
        } catch (...) {
          results[i] = std::current_exception();
        }
      }
    }
    groups_committed_.fetch_add(1);
    for (size_t i = 0; i < group.size(); ++i) {
      if (!group[i].done) continue;
      try {
        group[i].done(results[i]);
      } catch (const std::exception &e) {
        std::cerr << "write completion failed: " << e.what() << "\n";
      } catch (...) {
      }
    }
  }
}

// ---- ShardServer ----

namespace {

void reply_exception(ReplyContext ctx, std::exception_ptr err) {
  try {
    std::rethrow_exception(err);
  } catch (const Error &e) {
    ctx.reply_error(e.code(), e.what());
  } catch (const std::exception &e) {
    ctx.reply_error(ErrorCode::rpc_failed, e.what());
  }
}

void write_edge_list(PayloadWriter &w, const std::vector<std::pair<VertexId, EdgeRecord>> &edges,
                     uint64_t server_micros) {
  w.u32(static_cast<uint32_t>(edges.size()));
  for (const auto &[src, rec] : edges) {
    w.u64(src).u64(rec.other).u8(rec.label).u64(rec.edge);
  }
  w.u64(server_micros);
}

uint64_t now_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ShardServer::ShardServer(ClusterView cluster, uint32_t shard_id, ShardOptions opts)
    : cluster_(std::move(cluster)), shard_id_(shard_id), opts_(std::move(opts)) {
  if (shard_id_ >= cluster_.shard_count())
    throw Error(ErrorCode::invalid_argument, "shard id beyond hostfile shard range");
}

ShardServer::~ShardServer() { stop(); }

void ShardServer::start() {
  graph::GraphConfig gcfg = opts_.graph;
  gcfg.shard_id = shard_id_;
  try {
    store_ = graph::GraphStore::open(opts_.data_dir, opts_.graph_name, gcfg);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::not_found || !opts_.create_if_missing) throw;
    store_ = graph::GraphStore::create(opts_.data_dir, opts_.graph_name, gcfg);
  }
  writer_ = std::make_unique<WriteQueue>(*store_, opts_.writer_max_group);
  pool_ = std::make_unique<rt::TaskPool>(opts_.pool_workers);
  node_ = std::make_unique<rpc::RpcNode>(cluster_, static_cast<int>(shard_id_), pool_.get());
  register_handlers();
  node_->start();
}

void ShardServer::stop() {
  {
    std::lock_guard lk(shutdown_mu_);
    shutdown_requested_ = true;
  }
  shutdown_cv_.notify_all();
  if (node_) node_->stop();
  if (pool_) pool_->shutdown();
  if (writer_) writer_->shutdown();
}

void ShardServer::wait_for_shutdown() {
  std::unique_lock lk(shutdown_mu_);
  shutdown_cv_.wait(lk, [&] { return shutdown_requested_; });
}

LabelId ShardServer::intern_label(GraphTxn &txn, LabelId id, std::string_view name) {
  if (name.empty()) return id;
  if (id == 0) return txn.check_or_create_label(name);
  txn.intern_label_as(id, name);
  return id;
}

void ShardServer::register_handlers() {
  rpc::RpcNode &node = *node_;

  // -- write plane --

  node.register_handler(wire::kOpCheckOrCreateVertex, [this](PayloadReader &r,
                                                             ReplyContext &ctx) {
    std::string ext(r.bytes());
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    auto vid = std::make_shared<VertexId>();
    writer_->submit({[this, ext, lid, lname, vid](GraphTxn &txn) {
                       LabelId label = intern_label(txn, lid, lname);
                       *vid = txn.check_or_create_vertex(ext, label);
                     },
                     [ctx, vid](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u64(*vid);
                       ctx.reply(w.take());
                     }});
  });

  node.register_handler(wire::kOpAddVertex, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    auto props = read_props(r);
    auto vid = std::make_shared<VertexId>();
    writer_->submit({[this, ext, lid, lname, props, vid](GraphTxn &txn) {
                       LabelId label = intern_label(txn, lid, lname);
                       *vid = txn.check_or_create_vertex(ext, label);
                       for (const NamedProp &p : props)
                         txn.set_vertex_property(*vid, p.name, p.value);
                     },
                     [ctx, vid](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u64(*vid);
                       ctx.reply(w.take());
                     }});
  });

  node.register_handler(wire::kOpAddOutgoingEdge, [this](PayloadReader &r, ReplyContext &ctx) {
    VertexId src = r.u64();
    VertexId tgt = r.u64();
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    bool has_eid = r.u8() != 0;
    EdgeId eid_in = r.u64();
    auto props = read_props(r);
    auto eid = std::make_shared<EdgeId>();
    writer_->submit(
        {[this, src, tgt, lid, lname, has_eid, eid_in, props, eid](GraphTxn &txn) {
           LabelId label = intern_label(txn, lid, lname);
           *eid = txn.add_outgoing_edge(src, tgt, label,
                                        has_eid ? std::optional<EdgeId>(eid_in) : std::nullopt);
           for (const NamedProp &p : props) txn.set_edge_property(*eid, p.name, p.value);
         },
         [ctx, eid](std::exception_ptr err) mutable {
           if (err) return reply_exception(ctx, err);
           PayloadWriter w;
           w.u64(*eid);
           ctx.reply(w.take());
         }});
  });

  node.register_handler(wire::kOpAddIncomingEdge, [this](PayloadReader &r, ReplyContext &ctx) {
    VertexId tgt = r.u64();
    VertexId src = r.u64();
    EdgeId eid = r.u64();
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    writer_->submit({[this, tgt, src, eid, lid, lname](GraphTxn &txn) {
                       LabelId label = intern_label(txn, lid, lname);
                       txn.add_incoming_edge(tgt, src, eid, label);
                     },
                     [ctx](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       ctx.reply({});
                     }});
  });

  node.register_handler(wire::kOpSetVertexProp, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    std::string name(r.bytes());
    std::string enc(r.bytes());
    size_t pos = 0;
    PropValue value = decode_prop_value(enc, pos);
    writer_->submit({[ext, name, value](GraphTxn &txn) {
                       auto vid = txn.find_vertex(ext);
                       if (!vid) throw Error(ErrorCode::not_found, "no vertex " + ext);
                       txn.set_vertex_property(*vid, name, value);
                     },
                     [ctx](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       ctx.reply({});
                     }});
  });

  node.register_handler(wire::kOpSetEdgeProp, [this](PayloadReader &r, ReplyContext &ctx) {
    EdgeId eid = r.u64();
    std::string name(r.bytes());
    std::string enc(r.bytes());
    size_t pos = 0;
    PropValue value = decode_prop_value(enc, pos);
    writer_->submit({[eid, name, value](GraphTxn &txn) { txn.set_edge_property(eid, name, value); },
                     [ctx](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       ctx.reply({});
                     }});
  });

  node.register_handler(wire::kOpDeleteVertex, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    auto refs = std::make_shared<std::vector<graph::PurgeRef>>();
    auto vid = std::make_shared<VertexId>();
    writer_->submit({[ext, refs, vid](GraphTxn &txn) {
                       auto v = txn.find_vertex(ext);
                       if (!v) throw Error(ErrorCode::vertex_not_found, "no vertex " + ext);
                       *vid = *v;
                       *refs = txn.delete_vertex_local(*v);
                     },
                     [ctx, refs, vid](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u64(*vid);
                       w.u32(static_cast<uint32_t>(refs->size()));
                       for (const graph::PurgeRef &ref : *refs)
                         w.u64(ref.neighbor).u8(ref.label).u64(ref.edge).u8(
                             ref.purge_outgoing ? 1 : 0);
                       ctx.reply(w.take());
                     }});
  });

  node.register_handler(wire::kOpPurgeEdge, [this](PayloadReader &r, ReplyContext &) {
    VertexId owner = r.u64();
    VertexId deleted = r.u64();
    LabelId label = r.u8();
    EdgeId eid = r.u64();
    bool purge_outgoing = r.u8() != 0;
    writer_->submit({[owner, deleted, label, eid, purge_outgoing](GraphTxn &txn) {
                       if (purge_outgoing)
                         txn.purge_outgoing_record(owner, deleted, label, eid);
                       else
                         txn.purge_incoming_record(owner, deleted, label, eid);
                     },
                     nullptr});
  });

  node.register_handler(wire::kOpDeleteEdgeHalf, [this](PayloadReader &r, ReplyContext &ctx) {
    EdgeId eid = r.u64();
    VertexId src = r.u64();
    VertexId tgt = r.u64();
    writer_->submit({[eid, src, tgt](GraphTxn &txn) { txn.delete_edge(eid, src, tgt); },
                     [ctx](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       ctx.reply({});
                     }});
  });

  node.register_handler(wire::kOpCheckOrCreateLabel, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string name(r.bytes());
    auto lid = std::make_shared<LabelId>();
    writer_->submit({[name, lid](GraphTxn &txn) { *lid = txn.check_or_create_label(name); },
                     [ctx, lid](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u8(*lid);
                       ctx.reply(w.take());
                     }});
  });

  // -- asynchronous add-edge chain --

  node.register_handler(wire::kOpAsyncEdgeResolveTarget, [this](PayloadReader &r,
                                                                ReplyContext &ctx) {
    std::string src_ext(r.bytes());
    std::string tgt_ext(r.bytes());
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    auto props = read_props(r);
    bool confirm = r.u8() != 0;
    uint64_t origin_token = ctx.token();
    uint64_t origin_req = ctx.request_id();
    uint32_t src_shard = shard_of_external(src_ext, cluster_.shard_count());

    auto fail_origin = [this, confirm, origin_token, origin_req](std::exception_ptr err,
                                                                 const char *hop) {
      if (!confirm) return;
      try {
        std::rethrow_exception(err);
      } catch (const Error &e) {
        node_->reply_to_token(origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
                              wire::error_response(e.code(), std::string(hop) + ": " + e.what()));
      } catch (const std::exception &e) {
        node_->reply_to_token(
            origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
            wire::error_response(ErrorCode::rpc_failed, std::string(hop) + ": " + e.what()));
      }
    };

    if (src_shard == shard_id_) {
      // Both endpoints live here; the whole chain collapses into one local
      // transaction.
      auto eid = std::make_shared<EdgeId>();
      writer_->submit(
          {[this, src_ext, tgt_ext, lid, lname, props, eid](GraphTxn &txn) {
             LabelId label = intern_label(txn, lid, lname);
             VertexId vidt = txn.check_or_create_vertex(tgt_ext, label);
             VertexId vids = txn.check_or_create_vertex(src_ext, label);
             *eid = txn.add_outgoing_edge(vids, vidt, label);
             for (const NamedProp &p : props) txn.set_edge_property(*eid, p.name, p.value);
             txn.add_incoming_edge(vidt, vids, *eid, label);
           },
           [this, confirm, origin_token, origin_req, eid, fail_origin](std::exception_ptr err) {
             if (err) return fail_origin(err, "hop 1");
             if (!confirm) return;
             PayloadWriter w;
             w.u64(*eid);
             node_->reply_to_token(origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
                                   wire::ok_response(w.take()));
           }});
      return;
    }

    auto vidt = std::make_shared<VertexId>();
    writer_->submit(
        {[this, tgt_ext, lid, lname, vidt](GraphTxn &txn) {
           LabelId label = intern_label(txn, lid, lname);
           *vidt = txn.check_or_create_vertex(tgt_ext, label);
         },
         [this, src_ext, lid, lname, props, confirm, origin_token, origin_req, src_shard, vidt,
          fail_origin](std::exception_ptr err) {
           if (err) return fail_origin(err, "hop 1");
           PayloadWriter w;
           w.u64(*vidt).bytes(src_ext).u8(lid).bytes(lname);
           write_props(w, props);
           w.u8(confirm ? 1 : 0).u32(shard_id_).u64(origin_token).u64(origin_req);
           try {
             node_->send_oneway(src_shard, wire::kOpAsyncEdgeWriteOutgoing, w.take());
           } catch (const Error &) {
             fail_origin(std::current_exception(), "hop 2 send");
           }
         }});
  });

  node.register_handler(wire::kOpAsyncEdgeWriteOutgoing, [this](PayloadReader &r,
                                                                ReplyContext &) {
    VertexId vidt = r.u64();
    std::string src_ext(r.bytes());
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    auto props = read_props(r);
    bool confirm = r.u8() != 0;
    uint32_t target_node = r.u32();
    uint64_t origin_token = r.u64();
    uint64_t origin_req = r.u64();

    auto vids = std::make_shared<VertexId>();
    auto eid = std::make_shared<EdgeId>();
    writer_->submit(
        {[this, src_ext, vidt, lid, lname, props, vids, eid](GraphTxn &txn) {
           LabelId label = intern_label(txn, lid, lname);
           *vids = txn.check_or_create_vertex(src_ext, label);
           *eid = txn.add_outgoing_edge(*vids, vidt, label);
           for (const NamedProp &p : props) txn.set_edge_property(*eid, p.name, p.value);
         },
         [this, vidt, lid, lname, confirm, target_node, origin_token, origin_req, vids,
          eid](std::exception_ptr err) {
           PayloadWriter w;
           if (err) {
             std::string msg;
             try {
               std::rethrow_exception(err);
             } catch (const std::exception &e) {
               msg = e.what();
             }
             w.u8(1).bytes("hop 2: " + msg);
             w.u64(vidt).u64(0).u64(0).u8(lid).bytes(lname);
           } else {
             w.u8(0).bytes({});
             w.u64(vidt).u64(*vids).u64(*eid).u8(lid).bytes(lname);
           }
           w.u8(confirm ? 1 : 0).u64(origin_token).u64(origin_req);
           try {
             node_->send_oneway(target_node, wire::kOpAsyncEdgeWriteIncoming, w.take());
           } catch (const Error &e) {
             std::cerr << "async edge hop 3 send failed: " << e.what() << "\n";
           }
         }});
  });

  node.register_handler(wire::kOpAsyncEdgeWriteIncoming, [this](PayloadReader &r,
                                                                ReplyContext &) {
    uint8_t status = r.u8();
    std::string errmsg(r.bytes());
    VertexId vidt = r.u64();
    VertexId vids = r.u64();
    EdgeId eid = r.u64();
    LabelId lid = r.u8();
    std::string lname(r.bytes());
    bool confirm = r.u8() != 0;
    uint64_t origin_token = r.u64();
    uint64_t origin_req = r.u64();

    if (status != 0) {
      if (confirm)
        node_->reply_to_token(origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
                              wire::error_response(ErrorCode::rpc_failed, errmsg));
      return;
    }
    writer_->submit(
        {[this, vidt, vids, eid, lid, lname](GraphTxn &txn) {
           LabelId label = intern_label(txn, lid, lname);
           txn.add_incoming_edge(vidt, vids, eid, label);
         },
         [this, confirm, origin_token, origin_req, eid](std::exception_ptr err) {
           if (!confirm) return;
           if (err) {
             std::string msg;
             try {
               std::rethrow_exception(err);
             } catch (const std::exception &e) {
               msg = e.what();
             }
             node_->reply_to_token(origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
                                   wire::error_response(ErrorCode::rpc_failed, "hop 3: " + msg));
             return;
           }
           PayloadWriter w;
           w.u64(eid);
           node_->reply_to_token(origin_token, wire::kOpAsyncEdgeResolveTarget, origin_req,
                                 wire::ok_response(w.take()));
         }});
  });

  // -- bulk plane --

  node.register_handler(wire::kOpBulkVertices, [this](PayloadReader &r, ReplyContext &ctx) {
    uint32_t count = r.u32();
    auto specs = std::make_shared<std::vector<graph::VertexSpec>>();
    specs->reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      graph::VertexSpec spec;
      spec.external = std::string(r.bytes());
      spec.label = r.u8();
      spec.label_name = std::string(r.bytes());
      spec.props = read_props(r);
      specs->push_back(std::move(spec));
    }
    uint64_t range_len = r.u64();
    auto result = std::make_shared<GraphTxn::BatchVerticesResult>();
    writer_->submit({[specs, range_len, result](GraphTxn &txn) {
                       *result = txn.batch_add_vertices(*specs, range_len);
                     },
                     [ctx, result](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u32(static_cast<uint32_t>(result->ids.size()));
                       for (VertexId v : result->ids) w.u64(v);
                       w.u64(result->range.begin).u64(result->range.end);
                       ctx.reply(w.take());
                     }});
  });

  node.register_handler(wire::kOpBulkEdges, [this](PayloadReader &r, ReplyContext &ctx) {
    uint32_t count = r.u32();
    auto records = std::make_shared<std::vector<graph::BatchEdge>>();
    records->reserve(count);
    auto labels = std::make_shared<std::vector<std::pair<LabelId, std::string>>>();
    for (uint32_t i = 0; i < count; ++i) {
      graph::BatchEdge be;
      be.owner = r.u64();
      be.rec.other = r.u64();
      be.rec.label = r.u8();
      std::string lname(r.bytes());
      be.rec.edge = r.u64();
      be.incoming = r.u8() != 0;
      be.props = read_props(r);
      if (!lname.empty() &&
          (labels->empty() || labels->back() != std::make_pair(be.rec.label, lname)))
        labels->emplace_back(be.rec.label, lname);
      records->push_back(std::move(be));
    }
    auto inserted = std::make_shared<size_t>(0);
    writer_->submit({[this, records, labels, inserted](GraphTxn &txn) {
                       for (const auto &[lid, lname] : *labels) intern_label(txn, lid, lname);
                       *inserted = txn.batch_add_edges(*records);
                     },
                     [ctx, inserted](std::exception_ptr err) mutable {
                       if (err) return reply_exception(ctx, err);
                       PayloadWriter w;
                       w.u32(static_cast<uint32_t>(*inserted));
                       ctx.reply(w.take());
                     }});
  });

  // -- read plane (runs on pool workers against snapshots) --

  node.register_handler(wire::kOpFindVertex, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    auto vid = txn.find_vertex(ext);
    txn.abort();
    PayloadWriter w;
    w.u8(vid ? 1 : 0).u64(vid ? *vid : 0);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpGetAllEdges, [this](PayloadReader &r, ReplyContext &ctx) {
    uint32_t count = r.u32();
    std::vector<VertexId> vids;
    vids.reserve(count);
    for (uint32_t i = 0; i < count; ++i) vids.push_back(r.u64());
    uint64_t t0 = now_micros();
    std::vector<std::pair<VertexId, EdgeRecord>> edges;
    {
      // One read-only transaction covers the whole request: a vertex and its
      // adjacency are retrieved atomically.
      GraphTxn txn = store_->begin(kv::TxnMode::read_only);
      for (VertexId v : vids)
        for (const EdgeRecord &rec : txn.out_edges(v)) edges.emplace_back(v, rec);
      txn.abort();
    }
    PayloadWriter w;
    write_edge_list(w, edges, now_micros() - t0);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpGetOutEdges, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    uint64_t t0 = now_micros();
    std::vector<std::pair<VertexId, EdgeRecord>> edges;
    {
      GraphTxn txn = store_->begin(kv::TxnMode::read_only);
      auto vid = txn.find_vertex(ext);
      if (!vid) throw Error(ErrorCode::vertex_not_found, "no vertex " + ext);
      for (const EdgeRecord &rec : txn.out_edges(*vid)) edges.emplace_back(*vid, rec);
      txn.abort();
    }
    PayloadWriter w;
    write_edge_list(w, edges, now_micros() - t0);
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpGetVertexProp, [this](PayloadReader &r, ReplyContext &ctx) {
    std::string ext(r.bytes());
    std::string name(r.bytes());
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    auto vid = txn.find_vertex(ext);
    if (!vid) throw Error(ErrorCode::not_found, "no vertex " + ext);
    auto value = txn.get_vertex_property(*vid, name);
    txn.abort();
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

  node.register_handler(wire::kOpGetEdgeProp, [this](PayloadReader &r, ReplyContext &ctx) {
    EdgeId eid = r.u64();
    std::string name(r.bytes());
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    auto value = txn.get_edge_property(eid, name);
    txn.abort();
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

  node.register_handler(wire::kOpResolveVids, [this](PayloadReader &r, ReplyContext &ctx) {
    uint32_t count = r.u32();
    std::vector<VertexId> vids;
    vids.reserve(count);
    for (uint32_t i = 0; i < count; ++i) vids.push_back(r.u64());
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    PayloadWriter w;
    w.u32(count);
    for (VertexId v : vids) {
      auto ext = txn.external_of(v);
      w.bytes(ext ? *ext : std::string());
    }
    txn.abort();
    ctx.reply(w.take());
  });

  node.register_handler(wire::kOpDumpShard, [this](PayloadReader &, ReplyContext &ctx) {
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    kv::Txn &raw = txn.kv_txn();
    PayloadWriter w;

    kv::Db ex2i = *raw.find_db("ex2i");
    w.u32(static_cast<uint32_t>(raw.entry_count(ex2i)));
    kv::Cursor vc = raw.cursor(ex2i);
    for (vc.seek_first(); vc.valid(); vc.next()) {
      VertexId vid = get_u64be(vc.value());
      auto lname = txn.label_name(vertex_label(vid));
      w.bytes(vc.key()).u64(vid).bytes(lname ? *lname : std::string());
      write_props(w, txn.vertex_properties(vid));
    }

    kv::Db vi2e = *raw.find_db("vi2e");
    w.u32(static_cast<uint32_t>(raw.entry_count(vi2e)));
    kv::Cursor oc = raw.cursor(vi2e);
    for (oc.seek_first(); oc.valid(); oc.next()) {
      VertexId src = get_u64be(oc.key());
      EdgeRecord rec = graph::decode_edge_record(oc.value());
      auto lname = txn.label_name(rec.label);
      w.u64(src).u64(rec.other).bytes(lname ? *lname : std::string()).u64(rec.edge);
      write_props(w, txn.edge_properties(rec.edge));
    }

    kv::Db vi2e_in = *raw.find_db("vi2e_in");
    w.u32(static_cast<uint32_t>(raw.entry_count(vi2e_in)));
    kv::Cursor ic = raw.cursor(vi2e_in);
    for (ic.seek_first(); ic.valid(); ic.next()) {
      VertexId tgt = get_u64be(ic.key());
      EdgeRecord rec = graph::decode_edge_record(ic.value());
      w.u64(tgt).u64(rec.other).u8(rec.label).u64(rec.edge);
    }
    txn.abort();
    ctx.reply(w.take());
  });

  // -- instrumentation / control --

  node.register_handler(wire::kOpPing, [](PayloadReader &, ReplyContext &ctx) { ctx.reply({}); });

  node.register_handler(wire::kOpShardStats, [this](PayloadReader &, ReplyContext &ctx) {
    GraphTxn txn = store_->begin(kv::TxnMode::read_only);
    kv::Txn &raw = txn.kv_txn();
    PayloadWriter w;
    w.u64(store_->committed_txn_id());
    w.u64(txn.max_vid()).u64(txn.max_eid());
    w.u64(raw.entry_count(*raw.find_db("ex2i")));
    w.u64(raw.entry_count(*raw.find_db("vi2e")));
    w.u64(raw.entry_count(*raw.find_db("vi2e_in")));
    txn.abort();
    ctx.reply(w.take());
  });

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

}  // namespace shardgraph::dist
