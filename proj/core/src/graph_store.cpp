#include "shardgraph/graph_store.hpp"

#include <cstring>
#include <filesystem>

#include "shardgraph/bytes.hpp"

namespace shardgraph::graph {

namespace fs = std::filesystem;

namespace {

constexpr char kNamePrefix = 'n';
constexpr char kIdPrefix = 'i';

std::string label_name_key(std::string_view name) {
  std::string k(1, kNamePrefix);
  k += name;
  return k;
}

std::string label_id_key(LabelId id) {
  std::string k(1, kIdPrefix);
  k.push_back(static_cast<char>(id));
  return k;
}

std::string prop_name_key(std::string_view name) {
  std::string k(1, kNamePrefix);
  k += name;
  return k;
}

std::string prop_id_key(uint32_t pid) {
  std::string k(1, kIdPrefix);
  put_u32be(k, pid);
  return k;
}

uint64_t meta_u64(kv::Txn &txn, kv::Db meta, std::string_view key) {
  auto v = txn.get(meta, key);
  return v ? get_u64be(*v) : 0;
}

}  // namespace

void encode_edge_record(std::string &out, const EdgeRecord &rec) {
  put_u64be(out, rec.other);
  put_u8(out, rec.label);
  put_u64be(out, rec.edge);
}

EdgeRecord decode_edge_record(std::string_view bytes) {
  if (bytes.size() != 17) throw Error(ErrorCode::decode_error, "bad edge record size");
  const auto *p = reinterpret_cast<const uint8_t *>(bytes.data());
  EdgeRecord rec;
  rec.other = get_u64be(p);
  rec.label = p[8];
  rec.edge = get_u64be(p + 9);
  return rec;
}

// ---- GraphStore ----

std::unique_ptr<GraphStore> GraphStore::create(const std::string &root, const std::string &name,
                                               const GraphConfig &cfg) {
  if (name.empty() || name.find('/') != std::string::npos)
    throw Error(ErrorCode::invalid_argument, "bad graph name");
  fs::path dir = fs::path(root) / name;
  std::error_code ec;
  if (fs::exists(dir / "data.sgkv", ec))
    throw Error(ErrorCode::already_exists, "graph exists: " + name);

  auto store = std::unique_ptr<GraphStore>(new GraphStore());
  store->name_ = name;
  store->cfg_ = cfg;
  store->env_ = kv::Env::open(dir.string(), cfg.env);

  kv::Txn txn = store->env_->begin(kv::TxnMode::read_write);
  Dbs &d = store->dbs_;
  d.ex2i = txn.open_db("ex2i", false);
  d.i2ex = txn.open_db("i2ex", false);
  d.vi2e = txn.open_db("vi2e", true);
  d.vi2e_in = txn.open_db("vi2e_in", true);
  d.vid2pkv = txn.open_db("vid2pkv", !cfg.concat_prop_keys);
  d.eid2pkv = txn.open_db("eid2pkv", !cfg.concat_prop_keys);
  d.labels = txn.open_db("labels", false);
  d.props_interned = txn.open_db("props_interned", false);
  d.meta = txn.open_db("meta", false);
  txn.put(d.meta, "name", name);
  std::string shard;
  put_u32be(shard, cfg.shard_id);
  txn.put(d.meta, "shard", shard);
  txn.put(d.meta, "layout", cfg.concat_prop_keys ? "concat" : "dup");
  txn.commit();
  return store;
}

std::unique_ptr<GraphStore> GraphStore::open(const std::string &root, const std::string &name,
                                             const GraphConfig &cfg) {
  fs::path dir = fs::path(root) / name;
  std::error_code ec;
  if (!fs::exists(dir / "data.sgkv", ec))
    throw Error(ErrorCode::not_found, "no such graph: " + name);

  auto store = std::unique_ptr<GraphStore>(new GraphStore());
  store->name_ = name;
  store->cfg_ = cfg;
  store->env_ = kv::Env::open(dir.string(), cfg.env);

  kv::Txn txn = store->env_->begin(kv::TxnMode::read_only);
  Dbs &d = store->dbs_;
  auto open_existing = [&](std::string_view db_name, bool dup) {
    auto db = txn.find_db(db_name);
    if (!db)
      throw Error(ErrorCode::incompatible_format,
                  "graph is missing database " + std::string(db_name));
    if (txn.db_allows_duplicates(*db) != dup)
      throw Error(ErrorCode::incompatible_format,
                  "database flag mismatch for " + std::string(db_name));
    return *db;
  };
  d.meta = open_existing("meta", false);
  auto stored_layout = txn.get(d.meta, "layout");
  std::string want_layout = cfg.concat_prop_keys ? "concat" : "dup";
  if (!stored_layout)
    throw Error(ErrorCode::incompatible_format, "graph meta missing layout");
  if (*stored_layout != want_layout) {
    // The stored layout wins; the config flag only matters at creation.
    store->cfg_.concat_prop_keys = *stored_layout == "concat";
  }
  bool dup_props = !store->cfg_.concat_prop_keys;
  d.ex2i = open_existing("ex2i", false);
  d.i2ex = open_existing("i2ex", false);
  d.vi2e = open_existing("vi2e", true);
  d.vi2e_in = open_existing("vi2e_in", true);
  d.vid2pkv = open_existing("vid2pkv", dup_props);
  d.eid2pkv = open_existing("eid2pkv", dup_props);
  d.labels = open_existing("labels", false);
  d.props_interned = open_existing("props_interned", false);

  auto stored_name = txn.get(d.meta, "name");
  if (!stored_name || *stored_name != name)
    throw Error(ErrorCode::incompatible_format, "graph name mismatch");
  auto stored_shard = txn.get(d.meta, "shard");
  if (!stored_shard || get_u32be(reinterpret_cast<const uint8_t *>(stored_shard->data())) !=
                           cfg.shard_id)
    throw Error(ErrorCode::incompatible_format, "graph was created for a different shard id");
  txn.abort();
  return store;
}

void GraphStore::destroy(const std::string &root, const std::string &name) {
  fs::path dir = fs::path(root) / name;
  std::error_code ec;
  if (!fs::exists(dir, ec)) throw Error(ErrorCode::not_found, "no such graph: " + name);
  fs::remove_all(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "remove " + dir.string() + ": " + ec.message());
}

GraphTxn GraphStore::begin(kv::TxnMode mode) { return GraphTxn(this, env_->begin(mode)); }

// ---- GraphTxn ----

GraphTxn::GraphTxn(GraphStore *store, kv::Txn txn) : store_(store), txn_(std::move(txn)) {
  max_vid_ = meta_u64(txn_, store_->dbs_.meta, "max_vid");
  max_eid_ = meta_u64(txn_, store_->dbs_.meta, "max_eid");
  max_label_ = static_cast<uint32_t>(meta_u64(txn_, store_->dbs_.meta, "max_label"));
  max_pid_ = static_cast<uint32_t>(meta_u64(txn_, store_->dbs_.meta, "max_pid"));
}

void GraphTxn::flush_counters() {
  if (!counters_dirty_) return;
  kv::Db meta = store_->dbs_.meta;
  txn_.put(meta, "max_vid", u64be_key(max_vid_));
  txn_.put(meta, "max_eid", u64be_key(max_eid_));
  txn_.put(meta, "max_label", u64be_key(max_label_));
  txn_.put(meta, "max_pid", u64be_key(max_pid_));
  counters_dirty_ = false;
}

void GraphTxn::commit() {
  if (txn_.mode() == kv::TxnMode::read_write) flush_counters();
  txn_.commit();
}

void GraphTxn::abort() { txn_.abort(); }

void GraphTxn::require_vertex(VertexId v) const {
  if (!txn_.get(store_->dbs_.i2ex, u64be_key(v)))
    throw Error(ErrorCode::vertex_not_found, "vertex " + std::to_string(v));
}

// -- vertices --

VertexId GraphTxn::check_or_create_vertex(std::string_view external, LabelId label) {
  if (external.empty()) throw Error(ErrorCode::invalid_argument, "empty external id");
  auto existing = txn_.get(store_->dbs_.ex2i, external);
  if (existing) return get_u64be(*existing);  // label argument ignored for existing vertices
  uint64_t counter = max_vid_ + 1;
  if (counter > kMaxVertexCounter)
    throw Error(ErrorCode::storage_full, "vertex counter space exhausted");
  max_vid_ = counter;
  counters_dirty_ = true;
  VertexId vid = pack_vertex_id(label, store_->cfg_.shard_id, counter);
  txn_.put(store_->dbs_.ex2i, external, u64be_key(vid));
  txn_.put(store_->dbs_.i2ex, u64be_key(vid), external);
  return vid;
}

std::optional<VertexId> GraphTxn::find_vertex(std::string_view external) const {
  auto v = txn_.get(store_->dbs_.ex2i, external);
  if (!v) return std::nullopt;
  return get_u64be(*v);
}

std::optional<std::string> GraphTxn::external_of(VertexId v) const {
  return txn_.get(store_->dbs_.i2ex, u64be_key(v));
}

// -- labels --

LabelId GraphTxn::check_or_create_label(std::string_view name) {
  if (name.empty()) throw Error(ErrorCode::invalid_label, "empty label");
  auto existing = txn_.get(store_->dbs_.labels, label_name_key(name));
  if (existing) return static_cast<LabelId>((*existing)[0]);
  uint32_t next = max_label_ + 1;
  if (next > kMaxLabelId)
    throw Error(ErrorCode::label_space_exhausted,
                "cannot intern more than " + std::to_string(kMaxLabelId) + " labels");
  max_label_ = next;
  counters_dirty_ = true;
  LabelId id = static_cast<LabelId>(next);
  txn_.put(store_->dbs_.labels, label_name_key(name), std::string(1, static_cast<char>(id)));
  txn_.put(store_->dbs_.labels, label_id_key(id), std::string(name));
  return id;
}

void GraphTxn::intern_label_as(LabelId id, std::string_view name) {
  if (name.empty() || id == 0) throw Error(ErrorCode::invalid_label, "bad label mapping");
  auto existing = txn_.get(store_->dbs_.labels, label_name_key(name));
  if (existing) {
    if (static_cast<LabelId>((*existing)[0]) != id)
      throw Error(ErrorCode::invalid_label, "label id conflict for " + std::string(name));
    return;
  }
  auto reverse = txn_.get(store_->dbs_.labels, label_id_key(id));
  if (reverse && *reverse != name)
    throw Error(ErrorCode::invalid_label, "label id " + std::to_string(id) + " already bound");
  txn_.put(store_->dbs_.labels, label_name_key(name), std::string(1, static_cast<char>(id)));
  txn_.put(store_->dbs_.labels, label_id_key(id), std::string(name));
  if (id > max_label_) {
    max_label_ = id;
    counters_dirty_ = true;
  }
}

std::optional<LabelId> GraphTxn::find_label(std::string_view name) const {
  auto v = txn_.get(store_->dbs_.labels, label_name_key(name));
  if (!v) return std::nullopt;
  return static_cast<LabelId>((*v)[0]);
}

std::optional<std::string> GraphTxn::label_name(LabelId id) const {
  return txn_.get(store_->dbs_.labels, label_id_key(id));
}

// -- edges --

EdgeId GraphTxn::add_outgoing_edge(VertexId src, VertexId tgt, LabelId label,
                                   std::optional<EdgeId> eid) {
  require_vertex(src);
  EdgeId edge;
  if (eid) {
    edge = *eid;
  } else {
    uint64_t counter = max_eid_ + 1;
    if (counter > kMaxEdgeCounter)
      throw Error(ErrorCode::storage_full, "edge counter space exhausted");
    max_eid_ = counter;
    counters_dirty_ = true;
    edge = pack_edge_id(store_->cfg_.shard_id, counter);
  }
  std::string val;
  encode_edge_record(val, EdgeRecord{tgt, label, edge});
  txn_.put(store_->dbs_.vi2e, u64be_key(src), val);
  return edge;
}

void GraphTxn::add_incoming_edge(VertexId tgt, VertexId src, EdgeId eid, LabelId label) {
  require_vertex(tgt);
  std::string val;
  encode_edge_record(val, EdgeRecord{src, label, eid});
  txn_.put(store_->dbs_.vi2e_in, u64be_key(tgt), val);
}

std::vector<EdgeRecord> GraphTxn::out_edges(VertexId v, std::optional<LabelId> label) const {
  std::vector<EdgeRecord> out;
  for (const std::string &val : txn_.dup_scan(store_->dbs_.vi2e, u64be_key(v))) {
    EdgeRecord rec = decode_edge_record(val);
    if (!label || rec.label == *label) out.push_back(rec);
  }
  return out;
}

std::vector<EdgeRecord> GraphTxn::in_edges(VertexId v, std::optional<LabelId> label) const {
  std::vector<EdgeRecord> out;
  for (const std::string &val : txn_.dup_scan(store_->dbs_.vi2e_in, u64be_key(v))) {
    EdgeRecord rec = decode_edge_record(val);
    if (!label || rec.label == *label) out.push_back(rec);
  }
  return out;
}

// -- properties --

uint32_t GraphTxn::intern_prop_name(std::string_view name) {
  auto existing = txn_.get(store_->dbs_.props_interned, prop_name_key(name));
  if (existing) return get_u32be(reinterpret_cast<const uint8_t *>(existing->data()));
  uint32_t pid = ++max_pid_;
  counters_dirty_ = true;
  std::string idv;
  put_u32be(idv, pid);
  txn_.put(store_->dbs_.props_interned, prop_name_key(name), idv);
  txn_.put(store_->dbs_.props_interned, prop_id_key(pid), std::string(name));
  return pid;
}

std::optional<uint32_t> GraphTxn::find_prop_name(std::string_view name) const {
  auto v = txn_.get(store_->dbs_.props_interned, prop_name_key(name));
  if (!v) return std::nullopt;
  return get_u32be(reinterpret_cast<const uint8_t *>(v->data()));
}

std::optional<std::string> GraphTxn::prop_name_of(uint32_t pid) const {
  return txn_.get(store_->dbs_.props_interned, prop_id_key(pid));
}

void GraphTxn::set_property(kv::Db db, uint64_t entity_key, std::string_view name,
                            const PropValue &value) {
  if (name.empty()) throw Error(ErrorCode::invalid_argument, "empty property name");
  uint32_t pid = intern_prop_name(name);
  if (store_->cfg_.concat_prop_keys) {
    std::string key = u64be_key(entity_key);
    put_u32be(key, pid);
    std::string val;
    encode_prop_value(val, value);
    txn_.put(db, key, val);
    return;
  }
  std::string key = u64be_key(entity_key);
  std::string prefix;
  put_u32be(prefix, pid);
  std::vector<std::string> stale;
  kv::Cursor cur = txn_.cursor(db);
  for (cur.seek(key, prefix); cur.valid() && cur.key() == key; cur.next()) {
    std::string_view v = cur.value();
    if (v.size() < 4 || std::memcmp(v.data(), prefix.data(), 4) != 0) break;
    stale.emplace_back(v);
  }
  for (const std::string &s : stale) txn_.del(db, key, s);
  std::string val = prefix;
  encode_prop_value(val, value);
  txn_.put(db, key, val);
}

std::optional<PropValue> GraphTxn::get_property(kv::Db db, uint64_t entity_key,
                                                std::string_view name) const {
  auto pid = find_prop_name(name);
  if (!pid) return std::nullopt;
  if (store_->cfg_.concat_prop_keys) {
    std::string key = u64be_key(entity_key);
    put_u32be(key, *pid);
    auto v = txn_.get(db, key);
    if (!v) return std::nullopt;
    size_t pos = 0;
    return decode_prop_value(*v, pos);
  }
  std::string key = u64be_key(entity_key);
  std::string prefix;
  put_u32be(prefix, *pid);
  kv::Cursor cur = txn_.cursor(db);
  cur.seek(key, prefix);
  if (!cur.valid() || cur.key() != key) return std::nullopt;
  std::string_view v = cur.value();
  if (v.size() < 4 || std::memcmp(v.data(), prefix.data(), 4) != 0) return std::nullopt;
  size_t pos = 4;
  return decode_prop_value(v, pos);
}

std::vector<NamedProp> GraphTxn::all_properties(kv::Db db, uint64_t entity_key) const {
  std::vector<NamedProp> out;
  if (store_->cfg_.concat_prop_keys) {
    std::string prefix = u64be_key(entity_key);
    kv::Cursor cur = txn_.cursor(db);
    for (cur.seek(prefix); cur.valid(); cur.next()) {
      std::string_view k = cur.key();
      if (k.size() != 12 || k.substr(0, 8) != prefix) break;
      uint32_t pid = get_u32be(reinterpret_cast<const uint8_t *>(k.data()) + 8);
      auto name = prop_name_of(pid);
      size_t pos = 0;
      std::string_view v = cur.value();
      out.push_back({name ? *name : std::to_string(pid), decode_prop_value(v, pos)});
    }
    return out;
  }
  for (const std::string &v : txn_.dup_scan(db, u64be_key(entity_key))) {
    if (v.size() < 4) throw Error(ErrorCode::decode_error, "bad property row");
    uint32_t pid = get_u32be(reinterpret_cast<const uint8_t *>(v.data()));
    auto name = prop_name_of(pid);
    size_t pos = 4;
    out.push_back({name ? *name : std::to_string(pid), decode_prop_value(v, pos)});
  }
  return out;
}

void GraphTxn::drop_properties(kv::Db db, uint64_t entity_key) {
  if (store_->cfg_.concat_prop_keys) {
    std::string prefix = u64be_key(entity_key);
    std::vector<std::string> keys;
    kv::Cursor cur = txn_.cursor(db);
    for (cur.seek(prefix); cur.valid(); cur.next()) {
      std::string_view k = cur.key();
      if (k.size() < 8 || k.substr(0, 8) != prefix) break;
      keys.emplace_back(k);
    }
    for (const std::string &k : keys) txn_.del(db, k);
    return;
  }
  txn_.del(db, u64be_key(entity_key));
}

void GraphTxn::set_vertex_property(VertexId v, std::string_view name, const PropValue &value) {
  require_vertex(v);
  set_property(store_->dbs_.vid2pkv, v, name, value);
}

std::optional<PropValue> GraphTxn::get_vertex_property(VertexId v, std::string_view name) const {
  require_vertex(v);
  return get_property(store_->dbs_.vid2pkv, v, name);
}

std::vector<NamedProp> GraphTxn::vertex_properties(VertexId v) const {
  return all_properties(store_->dbs_.vid2pkv, v);
}

void GraphTxn::set_edge_property(EdgeId e, std::string_view name, const PropValue &value) {
  set_property(store_->dbs_.eid2pkv, e, name, value);
}

std::optional<PropValue> GraphTxn::get_edge_property(EdgeId e, std::string_view name) const {
  return get_property(store_->dbs_.eid2pkv, e, name);
}

std::vector<NamedProp> GraphTxn::edge_properties(EdgeId e) const {
  return all_properties(store_->dbs_.eid2pkv, e);
}

// -- deletes --

void GraphTxn::delete_edge(EdgeId eid, VertexId src, VertexId tgt) {
  uint32_t self = store_->cfg_.shard_id;
  if (vertex_shard(src) == self) {
    for (const EdgeRecord &rec : out_edges(src)) {
      if (rec.edge != eid) continue;
      std::string val;
      encode_edge_record(val, rec);
      txn_.del(store_->dbs_.vi2e, u64be_key(src), val);
      drop_properties(store_->dbs_.eid2pkv, eid);
      break;
    }
  }
  if (vertex_shard(tgt) == self) {
    for (const EdgeRecord &rec : in_edges(tgt)) {
      if (rec.edge != eid) continue;
      std::string val;
      encode_edge_record(val, rec);
      txn_.del(store_->dbs_.vi2e_in, u64be_key(tgt), val);
      break;
    }
  }
}

std::vector<PurgeRef> GraphTxn::delete_vertex_local(VertexId v) {
  auto ext = external_of(v);
  if (!ext) throw Error(ErrorCode::vertex_not_found, "vertex " + std::to_string(v));
  uint32_t self = store_->cfg_.shard_id;
  std::vector<PurgeRef> refs;

  for (const EdgeRecord &rec : out_edges(v)) {
    drop_properties(store_->dbs_.eid2pkv, rec.edge);
    if (vertex_shard(rec.other) == self) {
      std::string val;
      encode_edge_record(val, EdgeRecord{v, rec.label, rec.edge});
      txn_.del(store_->dbs_.vi2e_in, u64be_key(rec.other), val);
    } else {
      refs.push_back({rec.other, rec.label, rec.edge, false});
    }
  }
  for (const EdgeRecord &rec : in_edges(v)) {
    if (vertex_shard(rec.other) == self) {
      if (rec.other != v) {  // self-loops were fully handled above
        std::string val;
        encode_edge_record(val, EdgeRecord{v, rec.label, rec.edge});
        txn_.del(store_->dbs_.vi2e, u64be_key(rec.other), val);
        drop_properties(store_->dbs_.eid2pkv, rec.edge);
      }
    } else {
      refs.push_back({rec.other, rec.label, rec.edge, true});
    }
  }

  txn_.del(store_->dbs_.vi2e, u64be_key(v));
  txn_.del(store_->dbs_.vi2e_in, u64be_key(v));
  drop_properties(store_->dbs_.vid2pkv, v);
  txn_.del(store_->dbs_.ex2i, *ext);
  txn_.del(store_->dbs_.i2ex, u64be_key(v));
  return refs;
}

bool GraphTxn::purge_outgoing_record(VertexId owner, VertexId deleted, LabelId label,
                                     EdgeId eid) {
  std::string val;
  encode_edge_record(val, EdgeRecord{deleted, label, eid});
  bool found = txn_.del(store_->dbs_.vi2e, u64be_key(owner), val);
  if (found) drop_properties(store_->dbs_.eid2pkv, eid);
  return found;
}

bool GraphTxn::purge_incoming_record(VertexId owner, VertexId deleted, LabelId label,
                                     EdgeId eid) {
  std::string val;
  encode_edge_record(val, EdgeRecord{deleted, label, eid});
  return txn_.del(store_->dbs_.vi2e_in, u64be_key(owner), val);
}

// -- batches --

GraphTxn::BatchVerticesResult GraphTxn::batch_add_vertices(const std::vector<VertexSpec> &specs,
                                                           uint64_t edge_range_len) {
  BatchVerticesResult res;
  res.ids.reserve(specs.size());
  for (const VertexSpec &spec : specs) {
    LabelId label = spec.label;
    if (!spec.label_name.empty()) {
      if (label != 0)
        intern_label_as(label, spec.label_name);
      else
        label = check_or_create_label(spec.label_name);
    }
    VertexId vid = check_or_create_vertex(spec.external, label);
    for (const NamedProp &p : spec.props) set_vertex_property(vid, p.name, p.value);
    res.ids.push_back(vid);
  }
  uint64_t first = max_eid_ + 1;
  if (first + edge_range_len - 1 > kMaxEdgeCounter && edge_range_len > 0)
    throw Error(ErrorCode::storage_full, "edge counter space exhausted");
  if (edge_range_len > 0) {
    max_eid_ += edge_range_len;
    counters_dirty_ = true;
  }
  res.range.shard = store_->cfg_.shard_id;
  res.range.begin = pack_edge_id(store_->cfg_.shard_id, first);
  res.range.end = pack_edge_id(store_->cfg_.shard_id, first + edge_range_len);
  return res;
}

size_t GraphTxn::batch_add_edges(const std::vector<BatchEdge> &records) {
  size_t count = 0;
  VertexId verified = 0;
  for (const BatchEdge &be : records) {
    if (be.owner != verified) {
      require_vertex(be.owner);
      verified = be.owner;
    }
    std::string val;
    encode_edge_record(val, be.rec);
    txn_.put(be.incoming ? store_->dbs_.vi2e_in : store_->dbs_.vi2e, u64be_key(be.owner), val);
    if (!be.incoming)
      for (const NamedProp &p : be.props) set_edge_property(be.rec.edge, p.name, p.value);
    ++count;
  }
  return count;
}

}  // namespace shardgraph::graph
