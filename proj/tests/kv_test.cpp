#include "shardgraph/kv.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <thread>

#include "test_util.hpp"

using namespace shardgraph;
using namespace shardgraph::kv;
using shardgraph::test::TempDir;

namespace {

EnvConfig small_config() {
  EnvConfig cfg;
  cfg.map_size = 16ull << 20;
  return cfg;
}

}  // namespace

TEST(KvEnv, FreshDirIsEmpty) {
  TempDir dir("kv_fresh");
  auto env = Env::open(dir.sub("env"), small_config());
  Txn txn = env->begin(TxnMode::read_only);
  EXPECT_FALSE(txn.find_db("anything").has_value());
  EXPECT_EQ(env->committed_txn_id(), 0u);
  txn.abort();
}

TEST(KvEnv, DurabilityAcrossReopen) {
  TempDir dir("kv_reopen");
  {
    auto env = Env::open(dir.sub("env"), small_config());
    Txn txn = env->begin(TxnMode::read_write);
    Db db = txn.open_db("main", false);
    txn.put(db, "key", "value");
    txn.commit();
  }
  auto env = Env::open(dir.sub("env"), small_config());
  Txn txn = env->begin(TxnMode::read_only);
  Db db = *txn.find_db("main");
  EXPECT_EQ(txn.get(db, "key"), "value");
  txn.abort();
}

TEST(KvEnv, SmallerMapSizeClampsUpToExistingData) {
  TempDir dir("kv_clamp");
  {
    EnvConfig cfg = small_config();
    auto env = Env::open(dir.sub("env"), cfg);
    Txn txn = env->begin(TxnMode::read_write);
    Db db = txn.open_db("main", false);
    std::string big(1000, 'x');
    for (int i = 0; i < 2000; ++i) txn.put(db, "k" + std::to_string(i), big);
    txn.commit();
  }
  EnvConfig tiny = small_config();
  tiny.map_size = kPageSize;  // far below the committed extent
  auto env = Env::open(dir.sub("env"), tiny);
  Txn txn = env->begin(TxnMode::read_only);
  Db db = *txn.find_db("main");
  EXPECT_TRUE(txn.get(db, "k0").has_value());
  txn.abort();
  // But new writes beyond the clamped extent hit storage_full.
  Txn rw = env->begin(TxnMode::read_write);
  Db db2 = *rw.find_db("main");
  try {
    std::string big(1000, 'y');
    for (int i = 0; i < 5000; ++i) rw.put(db2, "extra" + std::to_string(i), big);
    FAIL() << "expected storage_full";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::storage_full);
  }
  rw.abort();
}

TEST(KvEnv, BeginOnClosedEnvFails) {
  TempDir dir("kv_closed");
  auto env = Env::open(dir.sub("env"), small_config());
  env->close();
  try {
    env->begin(TxnMode::read_only);
    FAIL() << "expected env_closed";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::env_closed);
  }
}

TEST(KvEnv, CorruptMagicIsIncompatibleFormat) {
  TempDir dir("kv_magic");
  { Env::open(dir.sub("env"), small_config()); }
  {
    FILE *f = fopen((dir.sub("env") + "/data.sgkv").c_str(), "r+b");
    ASSERT_NE(f, nullptr);
    const char junk[8] = {'n', 'o', 't', 'a', 'd', 'b', '!', '!'};
    // Both meta slots, so no valid fallback remains.
    fseek(f, 0, SEEK_SET);
    fwrite(junk, 1, 8, f);
    fseek(f, static_cast<long>(kPageSize), SEEK_SET);
    fwrite(junk, 1, 8, f);
    fclose(f);
  }
  try {
    Env::open(dir.sub("env"), small_config());
    FAIL() << "expected incompatible_format";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::incompatible_format);
  }
}

TEST(KvEnv, SecondProcessLockRejected) {
  TempDir dir("kv_lock");
  auto env = Env::open(dir.sub("env"), small_config());
  EXPECT_THROW(Env::open(dir.sub("env"), small_config()), Error);
}

TEST(KvTxn, AbortDiscards) {
  TempDir dir("kv_abort");
  auto env = Env::open(dir.sub("env"), small_config());
  {
    Txn txn = env->begin(TxnMode::read_write);
    Db db = txn.open_db("main", false);
    txn.put(db, "k", "v");
    txn.abort();
  }
  Txn txn = env->begin(TxnMode::read_only);
  EXPECT_FALSE(txn.find_db("main").has_value());  // db creation rolled back too
  txn.abort();
}

TEST(KvTxn, DuplicateValuesIterateSorted) {
  TempDir dir("kv_dup");
  auto env = Env::open(dir.sub("env"), small_config());
  Txn txn = env->begin(TxnMode::read_write);
  Db db = txn.open_db("dups", true);
  txn.put(db, "k", "3");
  txn.put(db, "k", "1");
  txn.put(db, "k", "2");
  EXPECT_EQ(txn.dup_scan(db, "k"), (std::vector<std::string>{"1", "2", "3"}));
  // Exact duplicate pairs are idempotent (set semantics).
  txn.put(db, "k", "2");
  EXPECT_EQ(txn.dup_scan(db, "k").size(), 3u);
  EXPECT_EQ(txn.entry_count(db), 3u);
  txn.commit();
}

TEST(KvTxn, ReadOnlySeesPreWriterSnapshot) {
  TempDir dir("kv_snap");
  auto env = Env::open(dir.sub("env"), small_config());
  {
    Txn setup = env->begin(TxnMode::read_write);
    Db db = setup.open_db("main", false);
    setup.put(db, "k", "old");
    setup.commit();
  }
  Txn writer = env->begin(TxnMode::read_write);
  Db wdb = *writer.find_db("main");
  writer.put(wdb, "k", "new");

  Txn reader = env->begin(TxnMode::read_only);  // not restricted by the open writer
  Db rdb = *reader.find_db("main");
  EXPECT_EQ(reader.get(rdb, "k"), "old");

  writer.commit();
  // The reader's view never changes during its lifetime.
  EXPECT_EQ(reader.get(rdb, "k"), "old");
  reader.abort();

  Txn after = env->begin(TxnMode::read_only);
  EXPECT_EQ(after.get(*after.find_db("main"), "k"), "new");
  after.abort();
}

TEST(KvTxn, SecondWriterBlocksUntilFirstCommits) {
  TempDir dir("kv_serial");
  auto env = Env::open(dir.sub("env"), small_config());
  Txn first = env->begin(TxnMode::read_write);
  Db db = first.open_db("main", false);
  first.put(db, "who", "first");

  std::atomic<bool> second_started{false}, second_done{false};
  std::thread t([&] {
    Txn second = env->begin(TxnMode::read_write);
    second_started = true;
    Db db2 = *second.find_db("main");
    EXPECT_EQ(second.get(db2, "who"), "first");  // sees first's committed state
    second.put(db2, "who", "second");
    second.commit();
    second_done = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_FALSE(second_started.load());  // blocked on the writer gate
  first.commit();
  t.join();
  EXPECT_TRUE(second_done.load());
  Txn check = env->begin(TxnMode::read_only);
  EXPECT_EQ(check.get(*check.find_db("main"), "who"), "second");
  check.abort();
}

TEST(KvTxn, ReadOnlyPutRejected) {
  TempDir dir("kv_ro");
  auto env = Env::open(dir.sub("env"), small_config());
  {
    Txn setup = env->begin(TxnMode::read_write);
    setup.open_db("main", false);
    setup.commit();
  }
  Txn ro = env->begin(TxnMode::read_only);
  Db db = *ro.find_db("main");
  try {
    ro.put(db, "k", "v");
    FAIL() << "expected read_only_violation";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::read_only_violation);
  }
  ro.abort();
}

TEST(KvTxn, KeyAndEntrySizeLimits) {
  TempDir dir("kv_limits");
  auto env = Env::open(dir.sub("env"), small_config());
  Txn txn = env->begin(TxnMode::read_write);
  Db db = txn.open_db("main", false);
  std::string longkey(kMaxKeyLen + 1, 'k');
  EXPECT_THROW(txn.put(db, longkey, "v"), Error);
  std::string bigval(kMaxEntryPayload, 'v');
  EXPECT_THROW(txn.put(db, "k", bigval), Error);
  txn.put(db, std::string(kMaxKeyLen, 'k'), std::string(kMaxEntryPayload - kMaxKeyLen, 'v'));
  txn.commit();
}

// Property test: a random workload of puts and deletes, with interleaved
// commits and reopens, must match std::map / std::multimap oracles exactly,
// including iteration order.
TEST(KvProperty, MatchesOrderedMapOracle) {
  TempDir dir("kv_oracle");
  std::mt19937 rng(20240817);
  auto rand_key = [&] {
    size_t len = 1 + rng() % 12;
    std::string s;
    for (size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng() % 4));
    return s;
  };
  auto rand_val = [&] {
    size_t len = rng() % 20;
    std::string s;
    for (size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('0' + rng() % 10));
    return s;
  };

  std::map<std::string, std::string> uniq_oracle;
  std::map<std::string, std::vector<std::string>> dup_oracle;  // values kept sorted

  auto env = Env::open(dir.sub("env"), small_config());
  {
    Txn txn = env->begin(TxnMode::read_write);
    txn.open_db("uniq", false);
    txn.open_db("dups", true);
    txn.commit();
  }

  for (int round = 0; round < 8; ++round) {
    Txn txn = env->begin(TxnMode::read_write);
    Db uniq = *txn.find_db("uniq");
    Db dups = *txn.find_db("dups");
    for (int op = 0; op < 600; ++op) {
      std::string k = rand_key();
      switch (rng() % 5) {
        case 0:
        case 1: {
          std::string v = rand_val();
          txn.put(uniq, k, v);
          uniq_oracle[k] = v;
          break;
        }
        case 2: {
          std::string v = rand_val();
          txn.put(dups, k, v);
          auto &vec = dup_oracle[k];
          auto it = std::lower_bound(vec.begin(), vec.end(), v);
          if (it == vec.end() || *it != v) vec.insert(it, v);
          break;
        }
        case 3: {
          bool found = txn.del(uniq, k);
          EXPECT_EQ(found, uniq_oracle.erase(k) > 0);
          break;
        }
        case 4: {
          bool found = txn.del(dups, k);
          auto it = dup_oracle.find(k);
          EXPECT_EQ(found, it != dup_oracle.end());
          if (it != dup_oracle.end()) dup_oracle.erase(it);
          break;
        }
      }
    }
    txn.commit();

    // Full-scan equality including byte order.
    Txn check = env->begin(TxnMode::read_only);
    Db cuniq = *check.find_db("uniq");
    Db cdups = *check.find_db("dups");
    std::vector<std::pair<std::string, std::string>> scanned;
    Cursor c = check.cursor(cuniq);
    for (c.seek_first(); c.valid(); c.next())
      scanned.emplace_back(std::string(c.key()), std::string(c.value()));
    std::vector<std::pair<std::string, std::string>> expect(uniq_oracle.begin(),
                                                            uniq_oracle.end());
    ASSERT_EQ(scanned, expect);

    std::vector<std::pair<std::string, std::string>> dup_scanned;
    Cursor dc = check.cursor(cdups);
    for (dc.seek_first(); dc.valid(); dc.next())
      dup_scanned.emplace_back(std::string(dc.key()), std::string(dc.value()));
    std::vector<std::pair<std::string, std::string>> dup_expect;
    for (const auto &[k, vec] : dup_oracle)
      for (const auto &v : vec) dup_expect.emplace_back(k, v);
    ASSERT_EQ(dup_scanned, dup_expect);
    check.abort();

    if (round % 3 == 2) {
      env->close();
      env.reset();
      env = Env::open(dir.sub("env"), small_config());
    }
  }
}

TEST(KvProperty, LargeSortedScanAfterRandomInserts) {
  TempDir dir("kv_bulk");
  EnvConfig cfg = small_config();
  cfg.map_size = 256ull << 20;
  auto env = Env::open(dir.sub("env"), cfg);
  std::mt19937_64 rng(7);
  std::map<std::string, std::string> oracle;
  Txn txn = env->begin(TxnMode::read_write);
  Db db = txn.open_db("bulk", false);
  for (int i = 0; i < 50000; ++i) {
    std::string k = std::to_string(rng() % 1000000);
    std::string v = std::to_string(i);
    txn.put(db, k, v);
    oracle[k] = v;
  }
  txn.commit();

  Txn check = env->begin(TxnMode::read_only);
  Db cdb = *check.find_db("bulk");
  EXPECT_EQ(check.entry_count(cdb), oracle.size());
  Cursor c = check.cursor(cdb);
  auto it = oracle.begin();
  size_t n = 0;
  for (c.seek_first(); c.valid(); c.next(), ++it, ++n) {
    ASSERT_NE(it, oracle.end());
    ASSERT_EQ(c.key(), it->first);
    ASSERT_EQ(c.value(), it->second);
  }
  EXPECT_EQ(n, oracle.size());
  check.abort();
}

// A commit that fails partway is all-or-nothing, and page ids it touched can
// be reused by a later commit without readers seeing the abandoned content.
TEST(KvTxn, FailedCommitIsInvisibleAndIdsReusable) {
  TempDir dir("kv_failed_commit");
  auto env = Env::open(dir.sub("env"), small_config());
  {
    Txn setup = env->begin(TxnMode::read_write);
    Db db = setup.open_db("main", false);
    setup.put(db, "base", "committed");
    setup.commit();
  }

  env->set_fail_commit_at_page(3);  // two pages land in the cache first
  {
    Txn doomed = env->begin(TxnMode::read_write);
    Db db = *doomed.find_db("main");
    for (int i = 0; i < 500; ++i) doomed.put(db, "doomed" + std::to_string(i), "junk");
    try {
      doomed.commit();
      FAIL() << "expected injected io_error";
    } catch (const Error &e) {
      EXPECT_EQ(e.code(), ErrorCode::io_error);
    }
  }
  env->set_fail_commit_at_page(0);

  {
    Txn check = env->begin(TxnMode::read_only);
    Db db = *check.find_db("main");
    EXPECT_EQ(check.get(db, "base"), "committed");
    EXPECT_FALSE(check.get(db, "doomed0").has_value());
    check.abort();
  }
  // The follow-up writer reuses the failed commit's page ids; reads through
  // the same environment (and its page cache) must see the new content.
  {
    Txn txn = env->begin(TxnMode::read_write);
    Db db = *txn.find_db("main");
    for (int i = 0; i < 500; ++i) txn.put(db, "fresh" + std::to_string(i), "value");
    txn.commit();
  }
  Txn check = env->begin(TxnMode::read_only);
  Db db = *check.find_db("main");
  EXPECT_EQ(check.get(db, "fresh0"), "value");
  EXPECT_EQ(check.get(db, "fresh499"), "value");
  EXPECT_FALSE(check.get(db, "doomed0").has_value());
  Cursor c = check.cursor(db);
  size_t n = 0;
  for (c.seek_first(); c.valid(); c.next()) ++n;
  EXPECT_EQ(n, 501u);
  check.abort();
}

TEST(KvTxn, StorageFullAndGrowthFlag) {
  TempDir dir("kv_full");
  EnvConfig cfg;
  cfg.map_size = 64 * kPageSize;
  auto env = Env::open(dir.sub("env"), cfg);
  Txn txn = env->begin(TxnMode::read_write);
  Db db = txn.open_db("main", false);
  bool full = false;
  try {
    for (int i = 0; i < 100000 && !full; ++i) txn.put(db, "key" + std::to_string(i), "value");
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::storage_full);
    full = true;
  }
  EXPECT_TRUE(full);
  txn.abort();
  env->close();
  env.reset();

  EnvConfig grow;
  grow.map_size = 64 * kPageSize;
  grow.allow_growth = true;
  auto env2 = Env::open(dir.sub("env2"), grow);
  Txn t2 = env2->begin(TxnMode::read_write);
  Db db2 = t2.open_db("main", false);
  for (int i = 0; i < 20000; ++i) t2.put(db2, "key" + std::to_string(i), "value");
  t2.commit();
  Txn check = env2->begin(TxnMode::read_only);
  EXPECT_EQ(check.entry_count(*check.find_db("main")), 20000u);
  check.abort();
}
