#pragma once

// Embedded ordered key-value store with copy-on-write transactions.
//
// Storage is a single append-only file of fixed-size pages. A committed
// transaction never overwrites a live page: modified pages are rewritten at
// fresh page ids and the double-buffered meta page flips to the new roots.
// Readers therefore hold a consistent snapshot for their whole lifetime, and
// a crash at any point recovers the most recent fully committed state.
//
// One read/write transaction may be active at a time (later writers block);
// read-only transactions are unrestricted. A transaction handle must not be
// used from two threads simultaneously.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "shardgraph/errors.hpp"

namespace shardgraph::kv {

inline constexpr size_t kPageSize = 4096;
inline constexpr uint32_t kMagic = 0x564b4753;  // "SGKV"
inline constexpr uint32_t kFormatVersion = 1;
inline constexpr size_t kMaxKeyLen = 511;
// Combined key+value payload ceiling per entry; keeps every cell well under
// half a page so node splits always succeed.
inline constexpr size_t kMaxEntryPayload = 1536;
inline constexpr size_t kMaxNameLen = 48;

struct EnvConfig {
  uint64_t map_size = 1ull << 30;
  uint32_t max_databases = 12;
  bool create_if_missing = true;
  bool allow_growth = false;    // grow map_size instead of storage_full
  bool sync_commits = true;     // fdatasync data and meta on commit
  size_t page_cache_pages = 65536;
  // Fault injection for tests: the Nth page write of a commit fails with
  // io_error (0 disables).
  size_t fail_commit_at_page = 0;
};

enum class TxnMode { read_only, read_write };

struct Db {
  uint32_t index = UINT32_MAX;
  bool valid() const { return index != UINT32_MAX; }
};

namespace detail {

struct Page {
  uint8_t b[kPageSize];
};
using PagePtr = std::shared_ptr<const Page>;

// Decoded node held by a write transaction until commit.
struct Node {
  bool leaf = true;
  std::vector<std::string> keys;
  std::vector<std::string> vals;      // leaf values, or branch separator value parts
  std::vector<uint64_t> children;     // branch only, parallel to keys
  size_t payload_bytes = 0;

  size_t cell_overhead() const { return leaf ? 4 : 12; }
  size_t encoded_size() const {
    return 8 + keys.size() * (2 + cell_overhead()) + payload_bytes;
  }
};
using NodePtr = std::shared_ptr<Node>;

struct DbMeta {
  std::string name;
  bool dup = false;
  bool in_use = false;
  uint64_t root = 0;
  uint64_t entries = 0;
};

struct MetaState {
  uint64_t txn_id = 0;
  uint64_t next_page = 2;
  std::vector<DbMeta> dbs;
};

// Either an immutable on-disk page or a transaction-local decoded node.
using NodeView = std::variant<PagePtr, NodePtr>;

}  // namespace detail

class Txn;
class Cursor;

class Env : public std::enable_shared_from_this<Env> {
 public:
  static std::shared_ptr<Env> open(const std::string &dir, const EnvConfig &cfg = {});
  ~Env();

  Env(const Env &) = delete;
  Env &operator=(const Env &) = delete;

  void close();
  bool is_closed() const { return closed_; }

  Txn begin(TxnMode mode);

  // Logical version of the latest commit; also the count of committed
  // read/write transactions since the environment was created.
  uint64_t committed_txn_id() const;
  uint64_t committed_page_count() const;
  const std::string &dir() const { return dir_; }

  // Test hook; call only while no write transaction is active.
  void set_fail_commit_at_page(size_t n) { cfg_.fail_commit_at_page = n; }

 private:
  friend class Txn;
  friend class Cursor;
  Env() = default;

  detail::PagePtr read_page(uint64_t id) const;
  void cache_insert(uint64_t id, detail::PagePtr page) const;
  void write_meta(const detail::MetaState &m);

  std::string dir_;
  EnvConfig cfg_;
  int fd_ = -1;
  int lock_fd_ = -1;
  uint64_t effective_map_size_ = 0;
  bool closed_ = false;

  mutable std::mutex meta_mu_;
  detail::MetaState committed_;

  std::mutex writer_mu_;
  std::condition_variable writer_cv_;
  bool writer_busy_ = false;

  mutable std::mutex cache_mu_;
  mutable std::unordered_map<uint64_t, detail::PagePtr> cache_;
  mutable std::deque<uint64_t> cache_fifo_;
};

class Txn {
 public:
  Txn(Txn &&other) noexcept;
  Txn &operator=(Txn &&) = delete;
  Txn(const Txn &) = delete;
  ~Txn();

  // Opens a named database, creating it in a read/write transaction. The
  // duplicate-key flag must match the database's existing flag.
  Db open_db(std::string_view name, bool allow_duplicate_keys);
  std::optional<Db> find_db(std::string_view name) const;
  bool db_allows_duplicates(Db db) const;

  void put(Db db, std::string_view key, std::string_view value);
  std::optional<std::string> get(Db db, std::string_view key) const;
  // All values stored under one duplicate key, in sorted order.
  std::vector<std::string> dup_scan(Db db, std::string_view key) const;
  // Removes every value under key; with a value, removes that exact pair.
  bool del(Db db, std::string_view key);
  bool del(Db db, std::string_view key, std::string_view value);

  uint64_t entry_count(Db db) const;
  Cursor cursor(Db db) const;

  void commit();
  void abort();

  bool is_open() const { return open_; }
  TxnMode mode() const { return mode_; }
  uint64_t snapshot_id() const { return view_.txn_id; }

 private:
  friend class Env;
  friend class Cursor;
  Txn(std::shared_ptr<Env> env, TxnMode mode);

  detail::NodeView fetch(uint64_t id) const;
  detail::NodePtr cow(uint64_t id, uint64_t &new_id);
  uint64_t alloc_page();
  detail::DbMeta &db_meta(Db db);
  const detail::DbMeta &db_meta(Db db) const;
  void require_open() const;
  void require_write() const;
  void release_writer();

  struct InsertResult {
    uint64_t id = 0;
    bool inserted = false;
    bool has_split = false;
    std::string sep_key, sep_val;
    uint64_t right_id = 0;
  };
  InsertResult insert_rec(uint64_t page_id, bool dup, std::string_view key,
                          std::string_view val);
  uint64_t delete_rec(uint64_t page_id, bool dup, std::string_view key,
                      const std::string_view *val, uint64_t &removed);

  std::shared_ptr<Env> env_;
  TxnMode mode_;
  detail::MetaState view_;
  uint64_t next_page_ = 0;
  std::unordered_map<uint64_t, detail::NodePtr> dirty_;
  bool open_ = false;
};

// Forward iterator over one database in (key, value) order. Mutating the
// owning transaction invalidates open cursors.
class Cursor {
 public:
  void seek_first();
  // Position at the first entry with key >= target (dup databases compare
  // the (key, value) pair when a value is given).
  void seek(std::string_view key, std::string_view value = {});
  bool valid() const { return valid_; }
  void next();
  std::string_view key() const;
  std::string_view value() const;

 private:
  friend class Txn;
  Cursor(const Txn *txn, Db db);

  struct Frame {
    uint64_t id;
    size_t idx;
    detail::NodeView view;
  };
  void descend_leftmost(uint64_t id);
  void advance_frame();

  const Txn *txn_;
  Db db_;
  bool dup_;
  std::vector<Frame> stack_;
  bool valid_ = false;
};

}  // namespace shardgraph::kv
