// shardgraph command line: shard and query-manager launchers, the
// firehose-backed CSV loaders, the BFS query harness, the canonical dump,
// and a small pretty-printing query client.

#include <CLI11.hpp>
#include <csignal>
#include <map>
#include <mutex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "bench_report.hpp"
#include "csv.hpp"
#include "shardgraph/dump.hpp"
#include "shardgraph/firehose.hpp"
#include "shardgraph/query_manager.hpp"
#include "shardgraph/shard_service.hpp"

using namespace shardgraph;

namespace {

volatile std::sig_atomic_t g_signalled = 0;
void on_signal(int) { g_signalled = 1; }

struct CommonArgs {
  std::string hostfile;
};

ClusterView load_cluster(const CommonArgs &common) { return parse_hostfile(common.hostfile); }

std::unique_ptr<rpc::RpcNode> client_node(const ClusterView &view) {
  return std::make_unique<rpc::RpcNode>(view, -1, nullptr);
}

template <typename Fn>
void run_threads(size_t n, Fn fn) {
  std::vector<std::thread> threads;
  for (size_t t = 0; t < n; ++t) threads.emplace_back(fn, t);
  for (auto &th : threads) th.join();
}

int cmd_shard(const CommonArgs &common, uint32_t id, const std::string &data_dir,
              const std::string &graph_name, size_t workers, uint64_t map_size, bool no_fsync) {
  ClusterView view = load_cluster(common);
  dist::ShardOptions opts;
  opts.data_dir = data_dir;
  opts.graph_name = graph_name;
  opts.pool_workers = workers;
  opts.graph.env.map_size = map_size;
  opts.graph.env.sync_commits = !no_fsync;
  opts.graph.env.allow_growth = true;
  dist::ShardServer server(view, id, opts);
  server.start();
  fprintf(stderr, "shard %u serving %s on %s:%u\n", id, graph_name.c_str(),
          view.endpoint(id).host.c_str(), view.endpoint(id).port);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_signalled && !server.shutdown_requested())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  fprintf(stderr, "shard %u stopping\n", id);
  server.stop();
  return 0;
}

int cmd_qm(const CommonArgs &common, size_t workers, uint16_t port_override) {
  ClusterView view = load_cluster(common);
  if (port_override != 0) view.endpoints.back().port = port_override;
  qm::QmOptions opts;
  opts.pool_workers = workers;
  qm::QueryManager manager(view, opts);
  manager.start();
  fprintf(stderr, "query manager serving on %s:%u\n",
          view.endpoints.back().host.c_str(), view.endpoints.back().port);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_signalled && !manager.shutdown_requested())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  fprintf(stderr, "query manager stopping\n");
  manager.stop();
  return 0;
}

int cmd_load_vertices(const CommonArgs &common, const std::string &csv_path, size_t batch,
                      size_t threads, const std::string &label, uint64_t block,
                      const std::string &metrics) {
  ClusterView view = load_cluster(common);
  auto node = client_node(view);
  dist::DistributedGraph dg(view, node.get());

  tools::VertexCsvReader reader(csv_path);
  std::vector<tools::VertexRow> rows;
  tools::VertexRow row;
  while (reader.next(row)) rows.push_back(row);

  tools::BenchReport report("load-vertices", block);
  report.add_skipped(reader.skipped());
  report.start();
  run_threads(threads, [&](size_t t) {
    dist::FirehoseOptions fopts;
    fopts.batch_size = batch;
    dist::Firehose fh(&dg, fopts);
    for (size_t i = t; i < rows.size(); i += threads) {
      dist::PendingVertex v;
      v.ext = rows[i].external;
      v.label = label;
      v.props = rows[i].props;
      fh.submit_vertex(std::move(v));
      report.add_items(1);
    }
    fh.close();
  });
  report.finish(node->counters_snapshot());
  report.print(stdout);
  if (!metrics.empty()) report.write_metrics(metrics);
  return 0;
}

int cmd_load_edges(const CommonArgs &common, const std::string &csv_path,
                   const std::string &mode, size_t threads, size_t batch,
                   const std::string &label, uint64_t block, size_t window, bool confirm,
                   bool no_cache, const std::string &metrics) {
  ClusterView view = load_cluster(common);
  auto node = client_node(view);
  dist::ProxyOptions popts;
  popts.vertex_cache_enabled = !no_cache;
  dist::DistributedGraph dg(view, node.get(), popts);
  dg.resolve_label(label);

  tools::EdgeCsvReader reader(csv_path);
  std::vector<tools::EdgeRow> rows;
  tools::EdgeRow row;
  while (reader.next(row)) rows.push_back(row);

  tools::BenchReport report("load-edges/" + mode, block);
  report.add_skipped(reader.skipped());
  std::mutex flush_mu;
  std::vector<dist::FlushReport> all_flushes;
  report.start();

  // The input splits into one chunk per thread; each thread owns its chunk.
  run_threads(threads, [&](size_t t) {
    size_t chunk = (rows.size() + threads - 1) / threads;
    size_t begin = t * chunk, end = std::min(rows.size(), begin + chunk);
    if (mode == "sync") {
      for (size_t i = begin; i < end; ++i) {
        try {
          dg.add_edge_sync(rows[i].src, label, rows[i].tgt, rows[i].props, confirm);
          report.add_items(1);
        } catch (const Error &) {
          report.add_failed(1);
        }
      }
    } else if (mode == "async") {
      std::deque<rpc::HandlePtr> inflight;
      auto reap = [&](bool all) {
        while (!inflight.empty() && (all || inflight.size() >= window)) {
          try {
            inflight.front()->take();
            report.add_items(1);
          } catch (const Error &) {
            report.add_failed(1);
          }
          inflight.pop_front();
        }
      };
      for (size_t i = begin; i < end; ++i) {
        inflight.push_back(dg.add_edge_async(rows[i].src, label, rows[i].tgt, rows[i].props,
                                             confirm));
        reap(false);
      }
      reap(true);
    } else {  // firehose
      dist::FirehoseOptions fopts;
      fopts.batch_size = batch;
      fopts.default_edge_label = label;
      fopts.cache_mappings = !no_cache;
      dist::Firehose fh(&dg, fopts);
      for (size_t i = begin; i < end; ++i) {
        dist::PendingEdge e;
        e.src = rows[i].src;
        e.tgt = rows[i].tgt;
        e.label = label;
        e.props = rows[i].props;
        fh.submit_edge(std::move(e));
      }
      std::vector<dist::FlushReport> flushes;
      flushes.push_back(fh.close());
      for (auto &r : fh.drain_auto_reports()) flushes.push_back(std::move(r));
      uint64_t ok = 0, failed = 0;
      for (const auto &r : flushes) {
        failed += r.edges_failed;
        ok += r.edges_submitted - r.edges_failed;
        std::lock_guard lk(flush_mu);
        all_flushes.push_back(r);
      }
      report.add_items(ok);
      report.add_failed(failed);
    }
  });
  report.finish(node->counters_snapshot());
  report.print(stdout);
  if (mode == "firehose" && !all_flushes.empty()) {
    // Aggregate per-shard flush stats across threads and batches.
    std::map<uint32_t, dist::ShardFlushStats> by_shard;
    for (const auto &f : all_flushes)
      for (const auto &s : f.shards) {
        dist::ShardFlushStats &agg = by_shard[s.shard];
        agg.shard = s.shard;
        agg.vertices_sent += s.vertices_sent;
        agg.out_edges += s.out_edges;
        agg.in_edges += s.in_edges;
        agg.millis += s.millis;
        agg.failed = agg.failed || s.failed;
      }
    printf("  flushes: %zu\n", all_flushes.size());
    for (const auto &[sid, s] : by_shard)
      printf("  shard %2u: %8llu vertices  %8llu out  %8llu in  %9.1f ms%s\n", sid,
             (unsigned long long)s.vertices_sent, (unsigned long long)s.out_edges,
             (unsigned long long)s.in_edges, s.millis, s.failed ? "  FAILED" : "");
  }
  if (!metrics.empty()) report.write_metrics(metrics);
  return 0;
}

int cmd_bfs(const CommonArgs &common, const std::string &starts_path, uint32_t depth,
            size_t threads, uint64_t count, uint64_t block, const std::string &out_path,
            const std::string &metrics) {
  ClusterView view = load_cluster(common);
  std::vector<std::string> starts;
  {
    std::ifstream in(starts_path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + starts_path);
    std::string line;
    while (std::getline(in, line) && (count == 0 || starts.size() < count))
      if (!line.empty()) starts.push_back(line);
  }

  std::vector<uint64_t> visited_counts(starts.size(), 0);
  std::vector<uint64_t> edge_counts(starts.size(), 0);
  tools::BenchReport report("bfs", block);
  report.start();
  run_threads(threads, [&](size_t t) {
    qm::QmClient client(view);
    size_t chunk = (starts.size() + threads - 1) / threads;
    size_t begin = t * chunk, end = std::min(starts.size(), begin + chunk);
    for (size_t i = begin; i < end; ++i) {
      try {
        qm::BfsResult res = client.bfs(starts[i], depth);
        visited_counts[i] = res.visited.size();
        edge_counts[i] = res.edges_traversed;
        report.add_items(1);
      } catch (const Error &) {
        report.add_failed(1);
      }
    }
  });
  report.finish({});
  report.print(stdout);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    for (size_t i = 0; i < starts.size(); ++i)
      out << starts[i] << "\t" << visited_counts[i] << "\t" << edge_counts[i] << "\n";
  }
  if (!metrics.empty()) report.write_metrics(metrics);
  return 0;
}

int cmd_dump(const CommonArgs &common, const std::string &out_path) {
  ClusterView view = load_cluster(common);
  auto node = client_node(view);
  dump::GraphDump full = dump::collect_cluster_dump(*node, view.shard_count());
  uint64_t violations = dump::pairing_violations(full);
  std::string text = dump::canonical_text(full);
  if (out_path.empty()) {
    fwrite(text.data(), 1, text.size(), stdout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << text;
  }
  if (violations) {
    fprintf(stderr, "warning: %llu unpaired edge tuples\n",
            (unsigned long long)violations);
    return 2;
  }
  return 0;
}

int cmd_shutdown(const CommonArgs &common) {
  ClusterView view = load_cluster(common);
  auto node = client_node(view);
  for (uint32_t n = 0; n < view.endpoints.size(); ++n) {
    try {
      node->call(n, wire::kOpShutdown, {});
      fprintf(stderr, "node %u stopped\n", n);
    } catch (const Error &e) {
      fprintf(stderr, "node %u: %s\n", n, e.what());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"shardgraph: a sharded property-graph database"};
  app.require_subcommand(1);

  size_t default_workers = 4;
  if (const char *env = getenv("SHARDGRAPH_WORKERS")) {
    long v = atol(env);
    if (v > 0) default_workers = static_cast<size_t>(v);
  }

  CommonArgs common;

  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--hostfile", common.hostfile, "cluster hostfile (host port per line)")
        ->required();
  };

  // shard
  uint32_t shard_id = 0;
  std::string data_dir, graph_name = "default";
  size_t workers = default_workers;
  uint64_t map_size = 4ull << 30;
  bool no_fsync = false;
  CLI::App *shard = app.add_subcommand("shard", "run one shard process");
  add_common(shard);
  shard->add_option("--id", shard_id, "shard index (hostfile line)")->required();
  shard->add_option("--data", data_dir, "data directory root")->required();
  shard->add_option("--graph", graph_name, "graph name");
  shard->add_option("--workers", workers, "scheduler worker threads");
  shard->add_option("--map-size", map_size, "storage map size in bytes");
  shard->add_flag("--no-fsync", no_fsync, "skip fsync on commit (benchmarks only)");

  // qm
  uint16_t qm_port = 0;
  CLI::App *qm_cmd = app.add_subcommand("qm", "run the query manager");
  add_common(qm_cmd);
  qm_cmd->add_option("--workers", workers, "scheduler worker threads");
  qm_cmd->add_option("--port", qm_port, "override the hostfile listen port");

  // load-vertices
  std::string csv_path, v_label = "node", e_label = "edge", metrics, mode = "firehose", out_path;
  size_t batch = 100000, threads = 1, window = 256;
  uint64_t block = 1000000, count = 0;
  bool no_cache = false, no_confirm = false;
  CLI::App *lv = app.add_subcommand("load-vertices", "bulk load a vertex CSV (firehose)");
  add_common(lv);
  lv->add_option("--csv", csv_path, "vertex CSV with header")->required();
  lv->add_option("--batch", batch, "firehose batch size");
  lv->add_option("--threads", threads, "loader threads");
  lv->add_option("--label", v_label, "vertex label");
  lv->add_option("--block", block, "per-block statistics size");
  lv->add_option("--metrics", metrics, "write line-per-metric file");

  // load-edges
  CLI::App *le = app.add_subcommand("load-edges", "load an edge CSV (sync|async|firehose)");
  add_common(le);
  le->add_option("--csv", csv_path, "edge CSV: source,target,weight")->required();
  le->add_option("--mode", mode, "sync, async or firehose")
      ->check(CLI::IsMember({"sync", "async", "firehose"}));
  le->add_option("--threads", threads, "loader threads");
  le->add_option("--batch", batch, "firehose batch size");
  le->add_option("--label", e_label, "edge label");
  le->add_option("--block", block, "per-block statistics size");
  le->add_option("--window", window, "async in-flight window");
  le->add_flag("--no-confirm", no_confirm, "skip the confirmation message");
  le->add_flag("--no-cache", no_cache, "disable the external-id cache");
  le->add_option("--metrics", metrics, "write line-per-metric file");

  // bfs
  std::string starts_path;
  uint32_t depth = 4;
  CLI::App *bfs = app.add_subcommand("bfs", "run fixed-depth BFS queries via the query manager");
  add_common(bfs);
  bfs->add_option("--starts", starts_path, "file with one start external id per line")
      ->required();
  bfs->add_option("--depth", depth, "traversal depth");
  bfs->add_option("--threads", threads, "client threads");
  bfs->add_option("--count", count, "limit the number of starts (0 = all)");
  bfs->add_option("--block", block, "per-block statistics size");
  bfs->add_option("--out", out_path, "write per-start visited counts");
  bfs->add_option("--metrics", metrics, "write line-per-metric file");

  // dump
  CLI::App *dump_cmd = app.add_subcommand("dump", "canonical full-graph dump");
  add_common(dump_cmd);
  dump_cmd->add_option("--out", out_path, "output file (default stdout)");

  // query
  CLI::App *query = app.add_subcommand("query", "one-off queries via the query manager");
  add_common(query);
  query->require_subcommand(1);
  std::string q_ext, q_name, q_value, q_src, q_tgt, q_label = "node";
  CLI::App *qv = query->add_subcommand("get-vertex", "look up a vertex");
  qv->add_option("ext", q_ext)->required();
  CLI::App *qav = query->add_subcommand("add-vertex", "add a vertex");
  qav->add_option("ext", q_ext)->required();
  qav->add_option("--label", q_label);
  CLI::App *qae = query->add_subcommand("add-edge", "add an edge (async protocol)");
  qae->add_option("src", q_src)->required();
  qae->add_option("label", q_label)->required();
  qae->add_option("tgt", q_tgt)->required();
  CLI::App *qgp = query->add_subcommand("get-prop", "read a vertex property");
  qgp->add_option("ext", q_ext)->required();
  qgp->add_option("name", q_name)->required();
  CLI::App *qsp = query->add_subcommand("set-prop", "set a vertex property");
  qsp->add_option("ext", q_ext)->required();
  qsp->add_option("name", q_name)->required();
  qsp->add_option("value", q_value)->required();
  CLI::App *qbfs = query->add_subcommand("bfs", "one BFS, printing the visited externals");
  qbfs->add_option("ext", q_ext)->required();
  qbfs->add_option("--depth", depth);

  // shutdown
  CLI::App *down = app.add_subcommand("shutdown", "stop every node in the hostfile");
  add_common(down);

  CLI11_PARSE(app, argc, argv);

  try {
    if (shard->parsed())
      return cmd_shard(common, shard_id, data_dir, graph_name, workers, map_size, no_fsync);
    if (qm_cmd->parsed()) return cmd_qm(common, workers, qm_port);
    if (lv->parsed())
      return cmd_load_vertices(common, csv_path, batch, threads, v_label, block, metrics);
    if (le->parsed())
      return cmd_load_edges(common, csv_path, mode, threads, batch, e_label, block, window,
                            !no_confirm, no_cache, metrics);
    if (bfs->parsed())
      return cmd_bfs(common, starts_path, depth, threads, count, block, out_path, metrics);
    if (dump_cmd->parsed()) return cmd_dump(common, out_path);
    if (down->parsed()) return cmd_shutdown(common);
    if (query->parsed()) {
      ClusterView view = load_cluster(common);
      qm::QmClient client(view);
      if (qv->parsed()) {
        auto vid = client.get_vertex(q_ext);
        if (!vid) {
          printf("not found: %s\n", q_ext.c_str());
          return 1;
        }
        printf("%s -> vid=%llu (label=%u shard=%u counter=%llu)\n", q_ext.c_str(),
               (unsigned long long)*vid, vertex_label(*vid), vertex_shard(*vid),
               (unsigned long long)vertex_counter(*vid));
      } else if (qav->parsed()) {
        VertexId vid = client.add_vertex(q_ext, q_label);
        printf("added %s -> vid=%llu\n", q_ext.c_str(), (unsigned long long)vid);
      } else if (qae->parsed()) {
        EdgeId eid = client.add_edge(q_src, q_label, q_tgt);
        printf("added %s -[%s]-> %s eid=%llu (shard=%u)\n", q_src.c_str(), q_label.c_str(),
               q_tgt.c_str(), (unsigned long long)eid, edge_shard(eid));
      } else if (qgp->parsed()) {
        auto value = client.get_vertex_property(q_ext, q_name);
        if (!value) {
          printf("unset\n");
          return 1;
        }
        printf("%s.%s = %s\n", q_ext.c_str(), q_name.c_str(),
               prop_value_to_string(*value).c_str());
      } else if (qsp->parsed()) {
        client.set_vertex_property(q_ext, q_name, tools::parse_prop_value(q_value));
        printf("ok\n");
      } else if (qbfs->parsed()) {
        qm::BfsResult res = client.bfs(q_ext, depth, true);
        printf("visited %zu vertices, traversed %llu edges\n", res.visited.size(),
               (unsigned long long)res.edges_traversed);
        for (size_t i = 0; i < res.externals.size(); ++i) printf("  %s\n", res.externals[i].c_str());
        for (size_t l = 0; l < res.levels.size(); ++l)
          printf("level %zu: issue %lluus remote %lluus transfer %lluus process %lluus\n", l,
                 (unsigned long long)res.levels[l].issue_us,
                 (unsigned long long)res.levels[l].remote_us,
                 (unsigned long long)res.levels[l].transfer_us,
                 (unsigned long long)res.levels[l].process_us);
      }
      return 0;
    }
  } catch (const Error &e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
