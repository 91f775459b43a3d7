#include "shardgraph/kv.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cassert>
#include <cerrno>
#include <cstring>
#include <filesystem>

#include "shardgraph/bytes.hpp"

namespace shardgraph::kv {

using detail::DbMeta;
using detail::MetaState;
using detail::Node;
using detail::NodePtr;
using detail::NodeView;
using detail::Page;
using detail::PagePtr;

namespace {

constexpr uint8_t kTypeBranch = 2;
constexpr uint8_t kTypeLeaf = 3;
constexpr size_t kDbSlotSize = 1 + kMaxNameLen + 3 + 8 + 8;
constexpr size_t kMetaFixed = 32;

[[noreturn]] void throw_errno(const char *op) {
  throw Error(ErrorCode::io_error, std::string(op) + ": " + std::strerror(errno));
}

void pread_full(int fd, void *buf, size_t len, uint64_t off) {
  auto *p = static_cast<uint8_t *>(buf);
  while (len > 0) {
    ssize_t n = ::pread(fd, p, len, static_cast<off_t>(off));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("pread");
    }
    if (n == 0) throw Error(ErrorCode::io_error, "short read (truncated file)");
    p += n;
    len -= static_cast<size_t>(n);
    off += static_cast<uint64_t>(n);
  }
}

void pwrite_full(int fd, const void *buf, size_t len, uint64_t off) {
  auto *p = static_cast<const uint8_t *>(buf);
  while (len > 0) {
    ssize_t n = ::pwrite(fd, p, len, static_cast<off_t>(off));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("pwrite");
    }
    p += n;
    len -= static_cast<size_t>(n);
    off += static_cast<uint64_t>(n);
  }
}

// ---- node page codec ----

struct RawCell {
  std::string_view key, val;
  uint64_t child = 0;
};

uint8_t raw_type(const Page &pg) { return pg.b[0]; }
size_t raw_count(const Page &pg) { return get_u16le(pg.b + 2); }

RawCell raw_cell(const Page &pg, size_t i) {
  size_t slot = get_u16le(pg.b + 8 + 2 * i);
  if (slot + 4 > kPageSize) throw Error(ErrorCode::io_error, "corrupt page: bad slot");
  const uint8_t *c = pg.b + slot;
  size_t klen = get_u16le(c);
  size_t vlen = get_u16le(c + 2);
  bool leaf = raw_type(pg) == kTypeLeaf;
  size_t head = leaf ? 4 : 12;
  if (slot + head + klen + vlen > kPageSize)
    throw Error(ErrorCode::io_error, "corrupt page: bad cell");
  RawCell cell;
  if (!leaf) cell.child = get_u64le(c + 4);
  cell.key = std::string_view(reinterpret_cast<const char *>(c + head), klen);
  cell.val = std::string_view(reinterpret_cast<const char *>(c + head + klen), vlen);
  return cell;
}

bool nv_leaf(const NodeView &v) {
  if (const auto *pg = std::get_if<PagePtr>(&v)) return raw_type(**pg) == kTypeLeaf;
  return std::get<NodePtr>(v)->leaf;
}

size_t nv_count(const NodeView &v) {
  if (const auto *pg = std::get_if<PagePtr>(&v)) return raw_count(**pg);
  return std::get<NodePtr>(v)->keys.size();
}

std::string_view nv_key(const NodeView &v, size_t i) {
  if (const auto *pg = std::get_if<PagePtr>(&v)) return raw_cell(**pg, i).key;
  return std::get<NodePtr>(v)->keys[i];
}

std::string_view nv_val(const NodeView &v, size_t i) {
  if (const auto *pg = std::get_if<PagePtr>(&v)) return raw_cell(**pg, i).val;
  return std::get<NodePtr>(v)->vals[i];
}

uint64_t nv_child(const NodeView &v, size_t i) {
  if (const auto *pg = std::get_if<PagePtr>(&v)) return raw_cell(**pg, i).child;
  return std::get<NodePtr>(v)->children[i];
}

NodePtr decode_node(const PagePtr &pg) {
  uint8_t type = raw_type(*pg);
  if (type != kTypeBranch && type != kTypeLeaf)
    throw Error(ErrorCode::io_error, "corrupt page: bad type");
  auto n = std::make_shared<Node>();
  n->leaf = type == kTypeLeaf;
  size_t count = raw_count(*pg);
  n->keys.reserve(count);
  n->vals.reserve(count);
  if (!n->leaf) n->children.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    RawCell c = raw_cell(*pg, i);
    n->keys.emplace_back(c.key);
    n->vals.emplace_back(c.val);
    if (!n->leaf) n->children.push_back(c.child);
    n->payload_bytes += c.key.size() + c.val.size();
  }
  return n;
}

void encode_node(const Node &n, Page &pg) {
  assert(n.encoded_size() <= kPageSize);
  std::memset(pg.b, 0, kPageSize);
  pg.b[0] = n.leaf ? kTypeLeaf : kTypeBranch;
  pg.b[2] = static_cast<uint8_t>(n.keys.size() & 0xff);
  pg.b[3] = static_cast<uint8_t>(n.keys.size() >> 8);
  size_t off = 8 + 2 * n.keys.size();
  for (size_t i = 0; i < n.keys.size(); ++i) {
    pg.b[8 + 2 * i] = static_cast<uint8_t>(off & 0xff);
    pg.b[8 + 2 * i + 1] = static_cast<uint8_t>(off >> 8);
    uint8_t *c = pg.b + off;
    const std::string &k = n.keys[i];
    const std::string &val = n.vals[i];
    c[0] = static_cast<uint8_t>(k.size() & 0xff);
    c[1] = static_cast<uint8_t>(k.size() >> 8);
    c[2] = static_cast<uint8_t>(val.size() & 0xff);
    c[3] = static_cast<uint8_t>(val.size() >> 8);
    size_t head = 4;
    if (!n.leaf) {
      uint64_t ch = n.children[i];
      for (int b = 0; b < 8; ++b) c[4 + b] = static_cast<uint8_t>((ch >> (8 * b)) & 0xff);
      head = 12;
    }
    std::memcpy(c + head, k.data(), k.size());
    std::memcpy(c + head + k.size(), val.data(), val.size());
    off += head + k.size() + val.size();
  }
}

int cmp_pair(bool dup, std::string_view ka, std::string_view va, std::string_view kb,
             std::string_view vb) {
  int c = ka.compare(kb);
  if (c != 0 || !dup) return c;
  return va.compare(vb);
}

// Rightmost child whose separator is <= (key, val); the first separator acts
// as minus infinity.
size_t route(const NodeView &v, bool dup, std::string_view key, std::string_view val) {
  size_t lo = 1, hi = nv_count(v);
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (cmp_pair(dup, nv_key(v, mid), nv_val(v, mid), key, val) > 0)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo - 1;
}

// Last child whose separator key (ignoring the value part) is <= key.
size_t route_key_upper(const NodeView &v, std::string_view key) {
  size_t lo = 1, hi = nv_count(v);
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (nv_key(v, mid).compare(key) > 0)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo - 1;
}

// First cell >= (key, val); exact set when the cell compares equal.
size_t leaf_lower_bound(const NodeView &v, bool dup, std::string_view key, std::string_view val,
                        bool *exact) {
  size_t lo = 0, hi = nv_count(v);
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (cmp_pair(dup, nv_key(v, mid), nv_val(v, mid), key, val) < 0)
      lo = mid + 1;
    else
      hi = mid;
  }
  if (exact)
    *exact = lo < nv_count(v) &&
             cmp_pair(dup, nv_key(v, lo), nv_val(v, lo), key, val) == 0;
  return lo;
}

void node_insert_cell(Node &n, size_t pos, std::string_view key, std::string_view val,
                      uint64_t child) {
  n.keys.insert(n.keys.begin() + pos, std::string(key));
  n.vals.insert(n.vals.begin() + pos, std::string(val));
  if (!n.leaf) n.children.insert(n.children.begin() + pos, child);
  n.payload_bytes += key.size() + val.size();
}

void node_erase_cells(Node &n, size_t first, size_t last) {
  for (size_t i = first; i < last; ++i) n.payload_bytes -= n.keys[i].size() + n.vals[i].size();
  n.keys.erase(n.keys.begin() + first, n.keys.begin() + last);
  n.vals.erase(n.vals.begin() + first, n.vals.begin() + last);
  if (!n.leaf) n.children.erase(n.children.begin() + first, n.children.begin() + last);
}

// Splits an overfull node, moving an upper slice into `right` so both halves
// encode within a page. Returns the index of the first moved cell.
size_t node_split(Node &n, Node &right) {
  size_t count = n.keys.size();
  assert(count >= 2);
  size_t overhead = 2 + n.cell_overhead();
  std::vector<size_t> prefix(count + 1, 0);
  for (size_t i = 0; i < count; ++i)
    prefix[i + 1] = prefix[i] + overhead + n.keys[i].size() + n.vals[i].size();
  size_t total = prefix[count];
  size_t best = 0, best_diff = SIZE_MAX;
  for (size_t m = 1; m < count; ++m) {
    size_t left_sz = 8 + prefix[m];
    size_t right_sz = 8 + total - prefix[m];
    if (left_sz > kPageSize || right_sz > kPageSize) continue;
    size_t diff = left_sz > right_sz ? left_sz - right_sz : right_sz - left_sz;
    if (diff < best_diff) {
      best_diff = diff;
      best = m;
    }
  }
  assert(best != 0);
  right.leaf = n.leaf;
  right.keys.assign(n.keys.begin() + best, n.keys.end());
  right.vals.assign(n.vals.begin() + best, n.vals.end());
  if (!n.leaf) right.children.assign(n.children.begin() + best, n.children.end());
  right.payload_bytes = 0;
  for (size_t i = 0; i < right.keys.size(); ++i)
    right.payload_bytes += right.keys[i].size() + right.vals[i].size();
  n.keys.resize(best);
  n.vals.resize(best);
  if (!n.leaf) n.children.resize(best);
  n.payload_bytes = prefix[best] - best * overhead;
  return best;
}

// ---- meta page codec ----

void encode_meta(const MetaState &m, Page &pg) {
  std::memset(pg.b, 0, kPageSize);
  std::string buf;
  buf.reserve(kMetaFixed + m.dbs.size() * kDbSlotSize);
  put_u32le(buf, kMagic);
  put_u32le(buf, kFormatVersion);
  put_u32le(buf, static_cast<uint32_t>(kPageSize));
  put_u32le(buf, static_cast<uint32_t>(m.dbs.size()));
  put_u64le(buf, m.txn_id);
  put_u64le(buf, m.next_page);
  for (const DbMeta &db : m.dbs) {
    put_u8(buf, static_cast<uint8_t>(db.name.size()));
    std::string name = db.name;
    name.resize(kMaxNameLen, '\0');
    buf += name;
    put_u8(buf, db.dup ? 1 : 0);
    put_u8(buf, db.in_use ? 1 : 0);
    put_u8(buf, 0);
    put_u64le(buf, db.root);
    put_u64le(buf, db.entries);
  }
  uint64_t sum = fnv1a64(buf);
  put_u64le(buf, sum);
  if (buf.size() > kPageSize) throw Error(ErrorCode::invalid_argument, "too many databases");
  std::memcpy(pg.b, buf.data(), buf.size());
}

bool decode_meta(const Page &pg, MetaState *out) {
  const uint8_t *p = pg.b;
  if (get_u32le(p) != kMagic) return false;
  if (get_u32le(p + 4) != kFormatVersion) return false;
  if (get_u32le(p + 8) != kPageSize) return false;
  uint32_t capacity = get_u32le(p + 12);
  size_t body = kMetaFixed + static_cast<size_t>(capacity) * kDbSlotSize;
  if (body + 8 > kPageSize) return false;
  uint64_t stored = get_u64le(p + body);
  std::string_view view(reinterpret_cast<const char *>(p), body);
  if (fnv1a64(view) != stored) return false;
  out->txn_id = get_u64le(p + 16);
  out->next_page = get_u64le(p + 24);
  out->dbs.clear();
  out->dbs.resize(capacity);
  for (uint32_t i = 0; i < capacity; ++i) {
    const uint8_t *s = p + kMetaFixed + i * kDbSlotSize;
    DbMeta &db = out->dbs[i];
    size_t name_len = s[0];
    if (name_len > kMaxNameLen) return false;
    db.name.assign(reinterpret_cast<const char *>(s + 1), name_len);
    db.dup = s[1 + kMaxNameLen] != 0;
    db.in_use = s[2 + kMaxNameLen] != 0;
    db.root = get_u64le(s + 4 + kMaxNameLen);
    db.entries = get_u64le(s + 12 + kMaxNameLen);
  }
  return true;
}

}  // namespace

// ---- Env ----

std::shared_ptr<Env> Env::open(const std::string &dir, const EnvConfig &cfg) {
  namespace fs = std::filesystem;
  if (cfg.max_databases == 0 || cfg.max_databases > 48)
    throw Error(ErrorCode::invalid_argument, "max_databases out of range");

  std::error_code ec;
  if (!fs::exists(dir, ec)) {
    if (!cfg.create_if_missing) throw Error(ErrorCode::not_found, "no such environment: " + dir);
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::io_error, "create " + dir + ": " + ec.message());
  }

  auto env = std::shared_ptr<Env>(new Env());
  env->dir_ = dir;
  env->cfg_ = cfg;

  std::string lock_path = dir + "/LOCK";
  env->lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (env->lock_fd_ < 0) throw_errno("open lock file");
  if (::flock(env->lock_fd_, LOCK_EX | LOCK_NB) != 0)
    throw Error(ErrorCode::io_error, "environment is locked by another process: " + dir);

  std::string data_path = dir + "/data.sgkv";
  env->fd_ = ::open(data_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (env->fd_ < 0) throw_errno("open data file");

  struct stat st {};
  if (::fstat(env->fd_, &st) != 0) throw_errno("fstat");

  if (static_cast<size_t>(st.st_size) < kPageSize) {
    // Fresh (or torn-at-creation) environment.
    env->committed_ = MetaState{};
    env->committed_.dbs.resize(cfg.max_databases);
    Page pg;
    encode_meta(env->committed_, pg);
    pwrite_full(env->fd_, pg.b, kPageSize, 0);
    Page zero;
    std::memset(zero.b, 0, kPageSize);
    pwrite_full(env->fd_, zero.b, kPageSize, kPageSize);
    if (cfg.sync_commits && ::fdatasync(env->fd_) != 0) throw_errno("fdatasync");
  } else {
    MetaState a, b;
    bool ok_a = false, ok_b = false;
    Page pg;
    pread_full(env->fd_, pg.b, kPageSize, 0);
    ok_a = decode_meta(pg, &a);
    if (static_cast<size_t>(st.st_size) >= 2 * kPageSize) {
      pread_full(env->fd_, pg.b, kPageSize, kPageSize);
      ok_b = decode_meta(pg, &b);
    }
    if (!ok_a && !ok_b)
      throw Error(ErrorCode::incompatible_format, "no valid meta page in " + data_path);
    if (ok_a && ok_b)
      env->committed_ = a.txn_id >= b.txn_id ? std::move(a) : std::move(b);
    else
      env->committed_ = ok_a ? std::move(a) : std::move(b);
  }

  // A map_size smaller than the data already committed is clamped up; the
  // configured limit only bounds further growth.
  env->effective_map_size_ =
      std::max<uint64_t>(cfg.map_size, env->committed_.next_page * kPageSize);
  return env;
}

Env::~Env() {
  try {
    close();
  } catch (...) {
  }
}

void Env::close() {
  {
    std::lock_guard lk(writer_mu_);
    if (closed_) return;
    closed_ = true;
  }
  writer_cv_.notify_all();
  if (fd_ >= 0) ::close(fd_);
  if (lock_fd_ >= 0) ::close(lock_fd_);
  fd_ = lock_fd_ = -1;
}

Txn Env::begin(TxnMode mode) {
  if (closed_) throw Error(ErrorCode::env_closed, "begin on closed environment");
  return Txn(shared_from_this(), mode);
}

uint64_t Env::committed_txn_id() const {
  std::lock_guard lk(meta_mu_);
  return committed_.txn_id;
}

uint64_t Env::committed_page_count() const {
  std::lock_guard lk(meta_mu_);
  return committed_.next_page;
}

PagePtr Env::read_page(uint64_t id) const {
  {
    std::lock_guard lk(cache_mu_);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
  }
  auto pg = std::make_shared<Page>();
  pread_full(fd_, pg->b, kPageSize, id * kPageSize);
  cache_insert(id, pg);
  return pg;
}

void Env::cache_insert(uint64_t id, PagePtr page) const {
  std::lock_guard lk(cache_mu_);
  // Overwrite, not skip: a failed commit may have cached pages at ids that a
  // later transaction legitimately reuses.
  auto [it, inserted] = cache_.insert_or_assign(id, std::move(page));
  if (inserted) {
    cache_fifo_.push_back(id);
    while (cache_.size() > cfg_.page_cache_pages && !cache_fifo_.empty()) {
      cache_.erase(cache_fifo_.front());
      cache_fifo_.pop_front();
    }
  }
}

// ---- Txn ----

Txn::Txn(std::shared_ptr<Env> env, TxnMode mode) : env_(std::move(env)), mode_(mode) {
  if (mode_ == TxnMode::read_write) {
    std::unique_lock lk(env_->writer_mu_);
    env_->writer_cv_.wait(lk, [&] { return !env_->writer_busy_ || env_->closed_; });
    if (env_->closed_) throw Error(ErrorCode::env_closed, "environment closed");
    env_->writer_busy_ = true;
  }
  {
    std::lock_guard lk(env_->meta_mu_);
    view_ = env_->committed_;
  }
  next_page_ = view_.next_page;
  open_ = true;
}

Txn::Txn(Txn &&other) noexcept
    : env_(std::move(other.env_)),
      mode_(other.mode_),
      view_(std::move(other.view_)),
      next_page_(other.next_page_),
      dirty_(std::move(other.dirty_)),
      open_(other.open_) {
  other.open_ = false;
}

Txn::~Txn() {
  if (open_) {
    try {
      abort();
    } catch (...) {
    }
  }
}

void Txn::require_open() const {
  if (!open_) throw Error(ErrorCode::txn_closed, "transaction is not open");
}

void Txn::require_write() const {
  require_open();
  if (mode_ != TxnMode::read_write)
    throw Error(ErrorCode::read_only_violation, "write in read-only transaction");
}

void Txn::release_writer() {
  if (mode_ != TxnMode::read_write) return;
  {
    std::lock_guard lk(env_->writer_mu_);
    env_->writer_busy_ = false;
  }
  env_->writer_cv_.notify_one();
}

DbMeta &Txn::db_meta(Db db) {
  if (!db.valid() || db.index >= view_.dbs.size() || !view_.dbs[db.index].in_use)
    throw Error(ErrorCode::invalid_argument, "invalid database handle");
  return view_.dbs[db.index];
}

const DbMeta &Txn::db_meta(Db db) const {
  if (!db.valid() || db.index >= view_.dbs.size() || !view_.dbs[db.index].in_use)
    throw Error(ErrorCode::invalid_argument, "invalid database handle");
  return view_.dbs[db.index];
}

Db Txn::open_db(std::string_view name, bool allow_duplicate_keys) {
  require_open();
  if (name.empty() || name.size() > kMaxNameLen)
    throw Error(ErrorCode::invalid_argument, "bad database name");
  for (uint32_t i = 0; i < view_.dbs.size(); ++i) {
    DbMeta &m = view_.dbs[i];
    if (m.in_use && m.name == name) {
      if (m.dup != allow_duplicate_keys)
        throw Error(ErrorCode::incompatible_format,
                    "database " + std::string(name) + " has a different duplicate-key flag");
      return Db{i};
    }
  }
  if (mode_ != TxnMode::read_write)
    throw Error(ErrorCode::not_found, "no such database: " + std::string(name));
  for (uint32_t i = 0; i < view_.dbs.size(); ++i) {
    DbMeta &m = view_.dbs[i];
    if (!m.in_use) {
      m = DbMeta{};
      m.name = std::string(name);
      m.dup = allow_duplicate_keys;
      m.in_use = true;
      return Db{i};
    }
  }
  throw Error(ErrorCode::invalid_argument, "max_databases exceeded");
}

std::optional<Db> Txn::find_db(std::string_view name) const {
  require_open();
  for (uint32_t i = 0; i < view_.dbs.size(); ++i)
    if (view_.dbs[i].in_use && view_.dbs[i].name == name) return Db{i};
  return std::nullopt;
}

bool Txn::db_allows_duplicates(Db db) const { return db_meta(db).dup; }

uint64_t Txn::entry_count(Db db) const {
  require_open();
  return db_meta(db).entries;
}

NodeView Txn::fetch(uint64_t id) const {
  auto it = dirty_.find(id);
  if (it != dirty_.end()) return it->second;
  return env_->read_page(id);
}

uint64_t Txn::alloc_page() {
  uint64_t id = next_page_;
  if ((id + 1) * kPageSize > env_->effective_map_size_) {
    if (!env_->cfg_.allow_growth)
      throw Error(ErrorCode::storage_full, "map_size exhausted at " +
                                               std::to_string(env_->effective_map_size_) +
                                               " bytes");
    env_->effective_map_size_ *= 2;
  }
  ++next_page_;
  return id;
}

NodePtr Txn::cow(uint64_t id, uint64_t &new_id) {
  auto it = dirty_.find(id);
  if (it != dirty_.end()) {
    new_id = id;
    return it->second;
  }
  NodePtr n = decode_node(env_->read_page(id));
  new_id = alloc_page();
  dirty_.emplace(new_id, n);
  return n;
}

Txn::InsertResult Txn::insert_rec(uint64_t page_id, bool dup, std::string_view key,
                                  std::string_view val) {
  NodeView view = fetch(page_id);
  InsertResult res;
  if (nv_leaf(view)) {
    bool exact = false;
    size_t pos = leaf_lower_bound(view, dup, key, val, &exact);
    if (exact) {
      if (dup || nv_val(view, pos) == val) {
        res.id = page_id;
        return res;  // exact duplicate (dup set semantics) or unchanged value
      }
      NodePtr n = cow(page_id, res.id);
      n->payload_bytes -= n->vals[pos].size();
      n->vals[pos] = std::string(val);
      n->payload_bytes += val.size();
    } else {
      NodePtr n = cow(page_id, res.id);
      node_insert_cell(*n, pos, key, val, 0);
      res.inserted = true;
    }
    NodePtr n = dirty_.at(res.id);
    if (n->encoded_size() > kPageSize) {
      auto right = std::make_shared<Node>();
      node_split(*n, *right);
      uint64_t right_id = alloc_page();
      dirty_.emplace(right_id, right);
      res.has_split = true;
      res.sep_key = right->keys.front();
      res.sep_val = right->vals.front();
      res.right_id = right_id;
    }
    return res;
  }

  size_t idx = route(view, dup, key, val);
  uint64_t child = nv_child(view, idx);
  InsertResult sub = insert_rec(child, dup, key, val);
  res.inserted = sub.inserted;
  if (sub.id == child && !sub.has_split) {
    res.id = page_id;
    return res;
  }
  NodePtr n = cow(page_id, res.id);
  n->children[idx] = sub.id;
  if (sub.has_split) {
    node_insert_cell(*n, idx + 1, sub.sep_key, sub.sep_val, sub.right_id);
    if (n->encoded_size() > kPageSize) {
      auto right = std::make_shared<Node>();
      node_split(*n, *right);
      uint64_t right_id = alloc_page();
      dirty_.emplace(right_id, right);
      res.has_split = true;
      res.sep_key = right->keys.front();
      res.sep_val = right->vals.front();
      res.right_id = right_id;
    }
  }
  return res;
}

void Txn::put(Db db, std::string_view key, std::string_view value) {
  require_write();
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty key");
  if (key.size() > kMaxKeyLen) throw Error(ErrorCode::key_too_large, "key exceeds 511 bytes");
  if (key.size() + value.size() > kMaxEntryPayload)
    throw Error(ErrorCode::value_too_large, "entry exceeds 1536 bytes");
  DbMeta &m = db_meta(db);
  if (m.root == 0) {
    uint64_t id = alloc_page();
    auto n = std::make_shared<Node>();
    n->leaf = true;
    node_insert_cell(*n, 0, key, value, 0);
    dirty_.emplace(id, n);
    m.root = id;
    m.entries = 1;
    return;
  }
  InsertResult r = insert_rec(m.root, m.dup, key, value);
  if (r.has_split) {
    uint64_t root_id = alloc_page();
    auto root = std::make_shared<Node>();
    root->leaf = false;
    NodeView left = fetch(r.id);
    node_insert_cell(*root, 0, nv_key(left, 0), nv_val(left, 0), r.id);
    node_insert_cell(*root, 1, r.sep_key, r.sep_val, r.right_id);
    dirty_.emplace(root_id, root);
    m.root = root_id;
  } else {
    m.root = r.id;
  }
  if (r.inserted) ++m.entries;
}

uint64_t Txn::delete_rec(uint64_t page_id, bool dup, std::string_view key,
                         const std::string_view *val, uint64_t &removed) {
  NodeView view = fetch(page_id);
  if (nv_leaf(view)) {
    size_t lo, hi;
    if (!dup) {
      bool exact = false;
      lo = leaf_lower_bound(view, false, key, {}, &exact);
      hi = exact ? lo + 1 : lo;
    } else if (val) {
      bool exact = false;
      lo = leaf_lower_bound(view, true, key, *val, &exact);
      hi = exact ? lo + 1 : lo;
    } else {
      lo = leaf_lower_bound(view, true, key, {}, nullptr);
      hi = lo;
      while (hi < nv_count(view) && nv_key(view, hi) == key) ++hi;
    }
    if (lo == hi) return page_id;
    uint64_t nid;
    NodePtr n = cow(page_id, nid);
    node_erase_cells(*n, lo, hi);
    removed += hi - lo;
    if (n->keys.empty()) {
      dirty_.erase(nid);
      return 0;
    }
    return nid;
  }

  size_t lo = route(view, dup, key, val ? *val : std::string_view{});
  size_t hi = (dup && !val) ? route_key_upper(view, key) : lo;
  struct Update {
    size_t idx;
    uint64_t id;
  };
  std::vector<Update> updates;
  std::vector<size_t> drops;
  for (size_t i = lo; i <= hi; ++i) {
    uint64_t child = nv_child(view, i);
    uint64_t r = delete_rec(child, dup, key, val, removed);
    if (r == child) continue;
    if (r == 0)
      drops.push_back(i);
    else
      updates.push_back({i, r});
  }
  if (updates.empty() && drops.empty()) return page_id;
  uint64_t nid;
  NodePtr n = cow(page_id, nid);
  for (const Update &u : updates) n->children[u.idx] = u.id;
  for (auto it = drops.rbegin(); it != drops.rend(); ++it) node_erase_cells(*n, *it, *it + 1);
  if (n->keys.empty()) {
    dirty_.erase(nid);
    return 0;
  }
  return nid;
}

bool Txn::del(Db db, std::string_view key) {
  require_write();
  DbMeta &m = db_meta(db);
  if (m.root == 0) return false;
  uint64_t removed = 0;
  m.root = delete_rec(m.root, m.dup, key, nullptr, removed);
  // Collapse single-child branch roots left behind by deletions.
  while (m.root != 0) {
    NodeView v = fetch(m.root);
    if (nv_leaf(v) || nv_count(v) != 1) break;
    uint64_t child = nv_child(v, 0);
    dirty_.erase(m.root);
    m.root = child;
  }
  m.entries -= removed;
  return removed > 0;
}

bool Txn::del(Db db, std::string_view key, std::string_view value) {
  require_write();
  DbMeta &m = db_meta(db);
  if (m.root == 0) return false;
  if (!m.dup) {
    // In a unique database the value must match for the pair form to delete.
    auto cur = get(db, key);
    if (!cur || *cur != value) return false;
    return del(db, key);
  }
  uint64_t removed = 0;
  std::string_view v = value;
  m.root = delete_rec(m.root, true, key, &v, removed);
  while (m.root != 0) {
    NodeView nv = fetch(m.root);
    if (nv_leaf(nv) || nv_count(nv) != 1) break;
    uint64_t child = nv_child(nv, 0);
    dirty_.erase(m.root);
    m.root = child;
  }
  m.entries -= removed;
  return removed > 0;
}

std::optional<std::string> Txn::get(Db db, std::string_view key) const {
  require_open();
  Cursor c = cursor(db);
  c.seek(key);
  if (c.valid() && c.key() == key) return std::string(c.value());
  return std::nullopt;
}

std::vector<std::string> Txn::dup_scan(Db db, std::string_view key) const {
  require_open();
  std::vector<std::string> out;
  Cursor c = cursor(db);
  for (c.seek(key); c.valid() && c.key() == key; c.next()) out.emplace_back(c.value());
  return out;
}

Cursor Txn::cursor(Db db) const {
  require_open();
  db_meta(db);
  return Cursor(this, db);
}

void Txn::commit() {
  require_open();
  if (mode_ == TxnMode::read_only) {
    open_ = false;
    return;
  }
  try {
    size_t written = 0;
    for (const auto &[id, node] : dirty_) {
      if (env_->cfg_.fail_commit_at_page != 0 && ++written == env_->cfg_.fail_commit_at_page)
        throw Error(ErrorCode::io_error, "injected commit failure");
      auto pg = std::make_shared<Page>();
      encode_node(*node, *pg);
      pwrite_full(env_->fd_, pg->b, kPageSize, id * kPageSize);
      env_->cache_insert(id, pg);
    }
    if (env_->cfg_.sync_commits && ::fdatasync(env_->fd_) != 0) throw_errno("fdatasync");
    view_.txn_id += 1;
    view_.next_page = next_page_;
    Page meta;
    encode_meta(view_, meta);
    pwrite_full(env_->fd_, meta.b, kPageSize, (view_.txn_id % 2) * kPageSize);
    if (env_->cfg_.sync_commits && ::fdatasync(env_->fd_) != 0) throw_errno("fdatasync");
  } catch (...) {
    open_ = false;
    dirty_.clear();
    release_writer();
    throw;
  }
  {
    std::lock_guard lk(env_->meta_mu_);
    env_->committed_ = view_;
  }
  open_ = false;
  dirty_.clear();
  release_writer();
}

void Txn::abort() {
  require_open();
  open_ = false;
  dirty_.clear();
  release_writer();
}

// ---- Cursor ----

Cursor::Cursor(const Txn *txn, Db db) : txn_(txn), db_(db), dup_(txn->db_meta(db).dup) {}

void Cursor::descend_leftmost(uint64_t id) {
  while (true) {
    NodeView v = txn_->fetch(id);
    stack_.push_back({id, 0, v});
    if (nv_leaf(v)) {
      valid_ = nv_count(v) > 0;
      return;
    }
    id = nv_child(v, 0);
  }
}

void Cursor::seek_first() {
  stack_.clear();
  valid_ = false;
  uint64_t root = txn_->db_meta(db_).root;
  if (root == 0) return;
  descend_leftmost(root);
}

void Cursor::seek(std::string_view key, std::string_view value) {
  stack_.clear();
  valid_ = false;
  uint64_t id = txn_->db_meta(db_).root;
  if (id == 0) return;
  while (true) {
    NodeView v = txn_->fetch(id);
    if (!nv_leaf(v)) {
      size_t idx = route(v, dup_, key, value);
      stack_.push_back({id, idx, v});
      id = nv_child(v, idx);
      continue;
    }
    size_t pos = leaf_lower_bound(v, dup_, key, value, nullptr);
    stack_.push_back({id, pos, v});
    if (pos < nv_count(v)) {
      valid_ = true;
      return;
    }
    advance_frame();
    return;
  }
}

void Cursor::next() {
  if (!valid_) return;
  Frame &f = stack_.back();
  if (++f.idx < nv_count(f.view)) return;
  advance_frame();
}

void Cursor::advance_frame() {
  stack_.pop_back();
  while (!stack_.empty()) {
    Frame &f = stack_.back();
    if (f.idx + 1 < nv_count(f.view)) {
      ++f.idx;
      descend_leftmost(nv_child(f.view, f.idx));
      return;
    }
    stack_.pop_back();
  }
  valid_ = false;
}

std::string_view Cursor::key() const {
  if (!valid_) throw Error(ErrorCode::invalid_argument, "cursor not positioned");
  return nv_key(stack_.back().view, stack_.back().idx);
}

std::string_view Cursor::value() const {
  if (!valid_) throw Error(ErrorCode::invalid_argument, "cursor not positioned");
  return nv_val(stack_.back().view, stack_.back().idx);
}

}  // namespace shardgraph::kv
