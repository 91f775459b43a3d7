#include "shardgraph/graph_store.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "test_util.hpp"

using namespace shardgraph;
using namespace shardgraph::graph;
using shardgraph::test::TempDir;
using kv::TxnMode;

namespace {

GraphConfig cfg_for_shard(uint32_t shard) {
  GraphConfig cfg;
  cfg.shard_id = shard;
  cfg.env.map_size = 64ull << 20;
  return cfg;
}

}  // namespace

TEST(GraphStore, CreateOpenDelete) {
  TempDir dir("gs_create");
  { auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0)); }
  {
    auto g = GraphStore::open(dir.str(), "g", cfg_for_shard(0));
    GraphTxn txn = g->begin(TxnMode::read_only);
    EXPECT_FALSE(txn.find_vertex("A").has_value());
    txn.abort();
  }
  EXPECT_THROW(GraphStore::create(dir.str(), "g", cfg_for_shard(0)), Error);
  GraphStore::destroy(dir.str(), "g");
  EXPECT_THROW(GraphStore::open(dir.str(), "g", cfg_for_shard(0)), Error);
}

TEST(GraphStore, VertexIdPacksLabelShardCounter) {
  TempDir dir("gs_pack");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId person = txn.check_or_create_label("Person");
  ASSERT_EQ(person, 1);
  VertexId a = txn.check_or_create_vertex("A", person);
  // label 1, shard 0, counter 1, by the 8/12/44 packing
  EXPECT_EQ(a, (uint64_t(1) << 56) | 1u);
  EXPECT_EQ(vertex_label(a), 1);
  EXPECT_EQ(vertex_shard(a), 0u);
  EXPECT_EQ(vertex_counter(a), 1u);

  EXPECT_EQ(txn.check_or_create_vertex("A", person), a);  // idempotent
  VertexId b = txn.check_or_create_vertex("B", person);
  EXPECT_EQ(vertex_counter(b), 2u);  // monotone allocation
  txn.commit();
}

TEST(GraphStore, ShardBitsInIds) {
  TempDir dir("gs_shard7");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(7));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId v = txn.check_or_create_vertex("X", l);
  EXPECT_EQ(vertex_shard(v), 7u);
  EdgeId e = txn.add_outgoing_edge(v, v, l);
  EXPECT_EQ(edge_shard(e), 7u);
  EXPECT_EQ(edge_counter(e), 1u);
  txn.commit();
}

TEST(GraphStore, CounterPersistsAcrossReopen) {
  TempDir dir("gs_counter");
  {
    auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
    GraphTxn txn = g->begin(TxnMode::read_write);
    LabelId l = txn.check_or_create_label("L");
    for (int i = 0; i < 5; ++i) txn.check_or_create_vertex("v" + std::to_string(i), l);
    txn.commit();
  }
  auto g = GraphStore::open(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  VertexId v = txn.check_or_create_vertex("fresh", 1);
  EXPECT_EQ(vertex_counter(v), 6u);
  txn.commit();
}

TEST(GraphStore, LabelInterning) {
  TempDir dir("gs_labels");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  EXPECT_EQ(txn.check_or_create_label("Knows"), 1);
  EXPECT_EQ(txn.check_or_create_label("Owns"), 2);
  EXPECT_EQ(txn.check_or_create_label("Knows"), 1);
  EXPECT_EQ(txn.label_name(2), "Owns");
  EXPECT_THROW(txn.check_or_create_label(""), Error);
  txn.commit();
}

TEST(GraphStore, LabelSpaceExhaustsAt256th) {
  TempDir dir("gs_label_space");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  for (int i = 1; i <= 255; ++i)
    EXPECT_EQ(txn.check_or_create_label("L" + std::to_string(i)), i);
  try {
    txn.check_or_create_label("L256");
    FAIL() << "expected label_space_exhausted";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::label_space_exhausted);
  }
  txn.abort();
}

TEST(GraphStore, InternLabelAsFromAuthority) {
  TempDir dir("gs_intern_as");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(3));
  GraphTxn txn = g->begin(TxnMode::read_write);
  txn.intern_label_as(7, "Remote");
  EXPECT_EQ(txn.find_label("Remote"), 7);
  EXPECT_EQ(txn.label_name(7), "Remote");
  txn.intern_label_as(7, "Remote");  // idempotent
  EXPECT_THROW(txn.intern_label_as(8, "Remote"), Error);
  EXPECT_THROW(txn.intern_label_as(7, "Other"), Error);
  txn.commit();
}

TEST(GraphStore, MultiEdgesAndInOutSymmetry) {
  TempDir dir("gs_edges");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("Knows");
  VertexId a = txn.check_or_create_vertex("A", l);
  VertexId b = txn.check_or_create_vertex("B", l);

  EdgeId e1 = txn.add_outgoing_edge(a, b, l);
  txn.add_incoming_edge(b, a, e1, l);
  EdgeId e2 = txn.add_outgoing_edge(a, b, l);
  txn.add_incoming_edge(b, a, e2, l);
  EXPECT_NE(e1, e2);  // multi-edges distinguished by edge id

  auto outs = txn.out_edges(a);
  ASSERT_EQ(outs.size(), 2u);
  EXPECT_EQ(outs[0].other, b);
  EXPECT_EQ(outs[1].other, b);

  auto ins = txn.in_edges(b);
  ASSERT_EQ(ins.size(), 2u);
  EXPECT_EQ(ins[0].other, a);
  std::set<EdgeId> out_ids{outs[0].edge, outs[1].edge}, in_ids{ins[0].edge, ins[1].edge};
  EXPECT_EQ(out_ids, in_ids);  // both halves share the same edge id

  EXPECT_THROW(txn.add_outgoing_edge(999999, b, l), Error);  // unknown src
  txn.commit();
}

TEST(GraphStore, EdgeLabelFilter) {
  TempDir dir("gs_filter");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId knows = txn.check_or_create_label("Knows");
  LabelId owns = txn.check_or_create_label("Owns");
  VertexId a = txn.check_or_create_vertex("A", knows);
  VertexId b = txn.check_or_create_vertex("B", knows);
  txn.add_outgoing_edge(a, b, knows);
  txn.add_outgoing_edge(a, b, owns);
  EXPECT_EQ(txn.out_edges(a).size(), 2u);
  EXPECT_EQ(txn.out_edges(a, knows).size(), 1u);
  EXPECT_EQ(txn.out_edges(a, owns).size(), 1u);
  txn.commit();
}

TEST(GraphStore, PropertySetGetOverwrite) {
  TempDir dir("gs_props");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId v = txn.check_or_create_vertex("A", l);

  txn.set_vertex_property(v, "age", PropValue(int64_t{30}));
  EXPECT_EQ(txn.get_vertex_property(v, "age"), PropValue(int64_t{30}));
  txn.set_vertex_property(v, "age", PropValue(int64_t{31}));
  EXPECT_EQ(txn.get_vertex_property(v, "age"), PropValue(int64_t{31}));
  EXPECT_FALSE(txn.get_vertex_property(v, "unset").has_value());

  // Last write wins with its own type.
  txn.set_vertex_property(v, "age", PropValue(std::string("old")));
  EXPECT_EQ(txn.get_vertex_property(v, "age"), PropValue(std::string("old")));

  txn.set_vertex_property(v, "scores", PropValue(std::vector<double>{1.5, 2.5}));
  txn.set_vertex_property(v, "meta", PropValue(PropList{PropValue("unit"), PropValue(3.0)}));
  auto all = txn.vertex_properties(v);
  EXPECT_EQ(all.size(), 3u);

  EXPECT_THROW(txn.set_vertex_property(424242, "x", PropValue(1.0)), Error);
  txn.commit();
}

TEST(GraphStore, EdgePropertiesKeyedByEdgeId) {
  TempDir dir("gs_eprops");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId a = txn.check_or_create_vertex("A", l);
  VertexId b = txn.check_or_create_vertex("B", l);
  EdgeId e = txn.add_outgoing_edge(a, b, l);
  txn.set_edge_property(e, "weight", PropValue(2.25));
  EXPECT_EQ(txn.get_edge_property(e, "weight"), PropValue(2.25));
  txn.commit();
}

TEST(GraphStore, ConcatPropertyLayoutVariant) {
  TempDir dir("gs_concat");
  GraphConfig cfg = cfg_for_shard(0);
  cfg.concat_prop_keys = true;
  VertexId v = 0;
  {
    auto g = GraphStore::create(dir.str(), "g", cfg);
    GraphTxn txn = g->begin(TxnMode::read_write);
    LabelId l = txn.check_or_create_label("L");
    v = txn.check_or_create_vertex("A", l);
    txn.set_vertex_property(v, "age", PropValue(int64_t{30}));
    txn.set_vertex_property(v, "age", PropValue(int64_t{31}));
    txn.set_vertex_property(v, "name", PropValue("ann"));
    EXPECT_EQ(txn.get_vertex_property(v, "age"), PropValue(int64_t{31}));
    EXPECT_EQ(txn.vertex_properties(v).size(), 2u);
    txn.commit();
  }
  // Reopening with the default flag keeps the stored layout.
  auto g = GraphStore::open(dir.str(), "g", cfg_for_shard(0));
  EXPECT_TRUE(g->concat_prop_keys());
  GraphTxn check = g->begin(TxnMode::read_only);
  EXPECT_EQ(check.get_vertex_property(v, "age"), PropValue(int64_t{31}));
  check.abort();
}

TEST(GraphStore, AbortDiscardsGraphOps) {
  TempDir dir("gs_abort");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  {
    GraphTxn txn = g->begin(TxnMode::read_write);
    txn.check_or_create_vertex("A", txn.check_or_create_label("L"));
    txn.abort();
  }
  GraphTxn txn = g->begin(TxnMode::read_write);
  EXPECT_FALSE(txn.find_vertex("A").has_value());
  // The aborted counter increment rolled back with the transaction.
  VertexId v = txn.check_or_create_vertex("B", txn.check_or_create_label("L"));
  EXPECT_EQ(vertex_counter(v), 1u);
  txn.commit();
}

TEST(GraphStore, DeleteVertexLocalCleansEverything) {
  TempDir dir("gs_delete");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId a = txn.check_or_create_vertex("A", l);
  VertexId b = txn.check_or_create_vertex("B", l);
  VertexId c = txn.check_or_create_vertex("C", l);
  txn.set_vertex_property(b, "p", PropValue(int64_t{1}));
  EdgeId ab = txn.add_outgoing_edge(a, b, l);
  txn.add_incoming_edge(b, a, ab, l);
  EdgeId bc = txn.add_outgoing_edge(b, c, l);
  txn.add_incoming_edge(c, b, bc, l);
  txn.set_edge_property(bc, "w", PropValue(1.0));
  // A remote in-edge and a remote out-edge (shard bits != 0).
  VertexId remote_src = pack_vertex_id(l, 5, 9);
  VertexId remote_tgt = pack_vertex_id(l, 6, 10);
  EdgeId remote_in = pack_edge_id(5, 77);
  txn.add_incoming_edge(b, remote_src, remote_in, l);
  EdgeId remote_out = txn.add_outgoing_edge(b, remote_tgt, l);

  auto refs = txn.delete_vertex_local(b);
  ASSERT_EQ(refs.size(), 2u);
  std::map<VertexId, bool> by_neighbor;
  for (const auto &r : refs) by_neighbor[r.neighbor] = r.purge_outgoing;
  EXPECT_TRUE(by_neighbor.at(remote_src));    // purge the outgoing half at the source
  EXPECT_FALSE(by_neighbor.at(remote_tgt));   // purge the incoming half at the target
  (void)remote_out;

  EXPECT_FALSE(txn.find_vertex("B").has_value());
  EXPECT_TRUE(txn.out_edges(b).empty());
  EXPECT_TRUE(txn.in_edges(b).empty());
  EXPECT_TRUE(txn.out_edges(a).empty());       // local outgoing half removed
  EXPECT_TRUE(txn.in_edges(c).empty());        // local incoming half removed
  EXPECT_TRUE(txn.vertex_properties(b).empty());
  EXPECT_TRUE(txn.edge_properties(bc).empty());
  EXPECT_THROW(txn.delete_vertex_local(b), Error);
  txn.commit();
}

TEST(GraphStore, PurgeRecordHelpers) {
  TempDir dir("gs_purge");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId a = txn.check_or_create_vertex("A", l);
  VertexId remote = pack_vertex_id(l, 3, 1);
  EdgeId e = txn.add_outgoing_edge(a, remote, l);
  txn.set_edge_property(e, "w", PropValue(1.0));
  EXPECT_TRUE(txn.purge_outgoing_record(a, remote, l, e));
  EXPECT_TRUE(txn.out_edges(a).empty());
  EXPECT_TRUE(txn.edge_properties(e).empty());
  EXPECT_FALSE(txn.purge_outgoing_record(a, remote, l, e));
  txn.commit();
}

TEST(GraphStore, BatchAddVerticesReservesEdgeRange) {
  TempDir dir("gs_batch");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(2));
  GraphTxn txn = g->begin(TxnMode::read_write);
  std::vector<VertexSpec> specs;
  for (int i = 0; i < 4; ++i) {
    VertexSpec s;
    s.external = "v" + std::to_string(i);
    s.label = 1;
    s.label_name = "L";
    s.props = {{"idx", PropValue(static_cast<int64_t>(i))}};
    specs.push_back(s);
  }
  auto res = txn.batch_add_vertices(specs, 10);
  ASSERT_EQ(res.ids.size(), 4u);
  EXPECT_EQ(res.range.size(), 10u);
  EXPECT_EQ(res.range.shard, 2u);
  EXPECT_EQ(edge_counter(res.range.begin), 1u);

  // Second batch re-resolves existing vertices and reserves a disjoint range.
  auto res2 = txn.batch_add_vertices(specs, 5);
  EXPECT_EQ(res2.ids, res.ids);
  EXPECT_EQ(edge_counter(res2.range.begin), 11u);
  EXPECT_FALSE(res.range.contains(res2.range.begin));

  std::vector<BatchEdge> edges;
  for (int i = 0; i < 3; ++i) {
    BatchEdge be;
    be.owner = res.ids[i];
    be.rec = EdgeRecord{res.ids[i + 1], 1, res.range.begin + i};
    be.incoming = false;
    edges.push_back(be);
    BatchEdge in;
    in.owner = res.ids[i + 1];
    in.rec = EdgeRecord{res.ids[i], 1, res.range.begin + i};
    in.incoming = true;
    edges.push_back(in);
  }
  EXPECT_EQ(txn.batch_add_edges(edges), 6u);
  EXPECT_EQ(txn.out_edges(res.ids[0]).size(), 1u);
  EXPECT_EQ(txn.in_edges(res.ids[1]).size(), 1u);
  txn.commit();
}

// Property round-trip across commit and reopen, and bijection invariant.
TEST(GraphProperty, RoundTripAndBijectionUnderRandomWorkload) {
  TempDir dir("gs_prop_rt");
  std::mt19937 rng(99);
  std::map<std::string, std::map<std::string, PropValue>> oracle;

  {
    auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
    for (int round = 0; round < 4; ++round) {
      GraphTxn txn = g->begin(TxnMode::read_write);
      LabelId l = txn.check_or_create_label("L");
      for (int i = 0; i < 200; ++i) {
        std::string ext = "v" + std::to_string(rng() % 50);
        VertexId v = txn.check_or_create_vertex(ext, l);
        std::string prop = "p" + std::to_string(rng() % 4);
        PropValue val;
        switch (rng() % 3) {
          case 0: val = PropValue(static_cast<int64_t>(rng() % 1000)); break;
          case 1: val = PropValue(static_cast<double>(rng() % 1000) / 8.0); break;
          default: val = PropValue("s" + std::to_string(rng() % 1000)); break;
        }
        txn.set_vertex_property(v, prop, val);
        oracle[ext][prop] = val;
      }
      txn.commit();
    }
  }

  auto g = GraphStore::open(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_only);
  for (const auto &[ext, props] : oracle) {
    auto vid = txn.find_vertex(ext);
    ASSERT_TRUE(vid.has_value());
    EXPECT_EQ(txn.external_of(*vid), ext);  // bijection
    for (const auto &[name, val] : props) {
      auto got = txn.get_vertex_property(*vid, name);
      ASSERT_TRUE(got.has_value()) << ext << "." << name;
      EXPECT_EQ(*got, val) << ext << "." << name;
    }
  }
  txn.abort();
}

// No id reuse: ids allocated after deletes continue past the deleted ones.
TEST(GraphProperty, NoCounterReuseAfterDelete) {
  TempDir dir("gs_reuse");
  auto g = GraphStore::create(dir.str(), "g", cfg_for_shard(0));
  GraphTxn txn = g->begin(TxnMode::read_write);
  LabelId l = txn.check_or_create_label("L");
  VertexId a = txn.check_or_create_vertex("A", l);
  VertexId b = txn.check_or_create_vertex("B", l);
  txn.delete_vertex_local(b);
  VertexId c = txn.check_or_create_vertex("C", l);
  EXPECT_EQ(vertex_counter(c), 3u);
  EXPECT_GT(vertex_counter(c), vertex_counter(a));
  txn.commit();
}
