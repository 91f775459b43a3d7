// End-to-end tests of the shardgraph CLI: cluster lifecycle, loader
// equivalence across the three ingest modes, launcher idempotence across a
// restart, and the loader report arithmetic.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "proc.hpp"
#include "test_util.hpp"

using namespace shardgraph;
using shardgraph::test::ChildProc;
using shardgraph::test::pick_free_ports;
using shardgraph::test::TempDir;

namespace {

std::string bin_path() {
  const char *env = getenv("SHARDGRAPH_BIN");
  if (!env) throw Error(ErrorCode::invalid_argument, "SHARDGRAPH_BIN not set");
  return env;
}

int run_cli(const std::vector<std::string> &argv, const std::string &log) {
  ChildProc p = ChildProc::spawn(argv, log);
  int status = p.wait();
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream out;
  out << in.rdbuf();
  return out.str();
}

// A running cluster of real shardgraph processes.
struct CliCluster {
  TempDir dir;
  std::string hostfile;
  std::vector<ChildProc> procs;
  std::vector<uint16_t> ports;
  std::string bin;

  CliCluster(uint32_t shards, const std::string &tag, bool with_qm)
      : dir("cli_" + tag), bin(bin_path()) {
    ports = pick_free_ports(shards + 1);
    hostfile = dir.sub("hosts.txt");
    std::ofstream out(hostfile);
    for (auto p : ports) out << "127.0.0.1 " << p << "\n";
    out.close();
    start(shards, with_qm);
  }

  void start(uint32_t shards, bool with_qm) {
    for (uint32_t s = 0; s < shards; ++s)
      procs.push_back(ChildProc::spawn(
          {bin, "shard", "--hostfile", hostfile, "--id", std::to_string(s), "--data",
           dir.sub("d" + std::to_string(s))},
          dir.sub("shard" + std::to_string(s) + ".log")));
    if (with_qm)
      procs.push_back(ChildProc::spawn({bin, "qm", "--hostfile", hostfile}, dir.sub("qm.log")));
    for (uint32_t s = 0; s < shards; ++s) shardgraph::test::wait_port_open(ports[s]);
    if (with_qm) shardgraph::test::wait_port_open(ports[shards]);
  }

  // Graceful stop through the shutdown opcode; children exit on their own.
  void stop_gracefully() {
    run_cli({bin, "shutdown", "--hostfile", hostfile}, dir.sub("shutdown.log"));
    for (auto &p : procs) {
      for (int i = 0; i < 100 && p.running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      p.kill_hard();  // no-op if already exited
    }
    procs.clear();
  }

  ~CliCluster() {
    for (auto &p : procs) p.kill_hard();
  }
};

void write_edge_csv(const std::string &path, int edges, unsigned seed) {
  std::mt19937 rng(seed);
  std::ofstream out(path);
  for (int i = 0; i < edges; ++i)
    out << "v" << rng() % 50 << ",v" << rng() % 50 << "," << (rng() % 100) / 4.0 << "\n";
}

}  // namespace

TEST(Cli, VertexCsvLoadsAndQueries) {
  CliCluster cluster(2, "verts", true);
  std::string csv = cluster.dir.sub("v.csv");
  {
    std::ofstream out(csv);
    out << "external_id,age,name\n";
    out << "ann,31,Ann\n";
    out << "bob,22,Bob\n";
    out << "bad_row,1,2,3,4\n";  // malformed: skipped and counted
    out << "cyn,45,Cyn\n";
  }
  std::string metrics = cluster.dir.sub("v.metrics");
  ASSERT_EQ(run_cli({cluster.bin, "load-vertices", "--hostfile", cluster.hostfile, "--csv", csv,
                     "--label", "person", "--metrics", metrics},
                    cluster.dir.sub("lv.log")),
            0);
  std::string m = read_file(metrics);
  EXPECT_NE(m.find("items\t3"), std::string::npos) << m;
  EXPECT_NE(m.find("skipped\t1"), std::string::npos) << m;

  EXPECT_EQ(run_cli({cluster.bin, "query", "--hostfile", cluster.hostfile, "get-vertex", "ann"},
                    cluster.dir.sub("q.log")),
            0);
  EXPECT_EQ(run_cli({cluster.bin, "query", "--hostfile", cluster.hostfile, "get-vertex", "nope"},
                    cluster.dir.sub("q2.log")),
            1);
  cluster.stop_gracefully();
}

// The same edge CSV loaded via sync, async and firehose into fresh clusters
// produces identical canonical dumps.
TEST(Cli, LoaderEquivalenceAcrossModes) {
  std::string first_dump;
  for (const std::string mode : {"sync", "async", "firehose"}) {
    CliCluster cluster(2, "eq_" + mode, false);
    std::string csv = cluster.dir.sub("edges.csv");
    write_edge_csv(csv, 300, 777);
    ASSERT_EQ(run_cli({cluster.bin, "load-edges", "--hostfile", cluster.hostfile, "--csv", csv,
                       "--mode", mode, "--threads", "2"},
                      cluster.dir.sub("load.log")),
              0)
        << read_file(cluster.dir.sub("load.log"));
    std::string dump_file = cluster.dir.sub("dump.txt");
    ASSERT_EQ(run_cli({cluster.bin, "dump", "--hostfile", cluster.hostfile, "--out", dump_file},
                      cluster.dir.sub("dump.log")),
              0);
    std::string text = read_file(dump_file);
    ASSERT_FALSE(text.empty());
    if (first_dump.empty())
      first_dump = text;
    else
      EXPECT_EQ(text, first_dump) << "mode " << mode << " diverged";
    cluster.stop_gracefully();
  }
}

// Re-serving an existing data directory recovers all data and counters.
TEST(Cli, LauncherIdempotence) {
  CliCluster cluster(2, "restart", false);
  std::string csv = cluster.dir.sub("edges.csv");
  write_edge_csv(csv, 200, 888);
  ASSERT_EQ(run_cli({cluster.bin, "load-edges", "--hostfile", cluster.hostfile, "--csv", csv,
                     "--mode", "firehose"},
                    cluster.dir.sub("load.log")),
            0);
  std::string dump_a = cluster.dir.sub("a.txt");
  ASSERT_EQ(run_cli({cluster.bin, "dump", "--hostfile", cluster.hostfile, "--out", dump_a},
                    cluster.dir.sub("dump_a.log")),
            0);
  cluster.stop_gracefully();

  cluster.start(2, false);
  std::string dump_b = cluster.dir.sub("b.txt");
  ASSERT_EQ(run_cli({cluster.bin, "dump", "--hostfile", cluster.hostfile, "--out", dump_b},
                    cluster.dir.sub("dump_b.log")),
            0);
  EXPECT_EQ(read_file(dump_a), read_file(dump_b));

  // New writes continue cleanly after the restart.
  ASSERT_EQ(run_cli({cluster.bin, "load-edges", "--hostfile", cluster.hostfile, "--csv", csv,
                     "--mode", "firehose"},
                    cluster.dir.sub("load2.log")),
            0);
  std::string dump_c = cluster.dir.sub("c.txt");
  ASSERT_EQ(run_cli({cluster.bin, "dump", "--hostfile", cluster.hostfile, "--out", dump_c},
                    cluster.dir.sub("dump_c.log")),
            0);
  EXPECT_NE(read_file(dump_c), read_file(dump_b));  // duplicates became multi-edges
  cluster.stop_gracefully();
}

// Report arithmetic: block item counts sum to the total and the rate is
// items over wall time.
TEST(Cli, ReportArithmetic) {
  CliCluster cluster(1, "report", false);
  std::string csv = cluster.dir.sub("edges.csv");
  write_edge_csv(csv, 230, 999);
  std::string metrics = cluster.dir.sub("m.txt");
  ASSERT_EQ(run_cli({cluster.bin, "load-edges", "--hostfile", cluster.hostfile, "--csv", csv,
                     "--mode", "firehose", "--block", "100", "--metrics", metrics},
                    cluster.dir.sub("load.log")),
            0);
  std::map<std::string, double> kv;
  {
    std::ifstream in(metrics);
    std::string line;
    while (std::getline(in, line)) {
      size_t tab = line.find('\t');
      if (tab == std::string::npos) continue;
      char *end = nullptr;
      double v = strtod(line.c_str() + tab + 1, &end);
      if (end != line.c_str() + tab + 1) kv[line.substr(0, tab)] = v;
    }
  }
  ASSERT_EQ(kv["items"], 230.0);
  double block_sum = 0;
  for (int i = 1; kv.count("block_" + std::to_string(i) + "_items"); ++i)
    block_sum += kv["block_" + std::to_string(i) + "_items"];
  EXPECT_EQ(block_sum, 230.0);
  ASSERT_GT(kv["wall_seconds"], 0.0);
  EXPECT_NEAR(kv["items_per_sec"], kv["items"] / kv["wall_seconds"],
              kv["items_per_sec"] * 0.01);
  cluster.stop_gracefully();
}

TEST(Cli, BfsHarnessThroughQueryManager) {
  CliCluster cluster(2, "bfs", true);
  std::string csv = cluster.dir.sub("edges.csv");
  write_edge_csv(csv, 400, 1234);
  ASSERT_EQ(run_cli({cluster.bin, "load-edges", "--hostfile", cluster.hostfile, "--csv", csv,
                     "--mode", "firehose"},
                    cluster.dir.sub("load.log")),
            0);
  std::string starts = cluster.dir.sub("starts.txt");
  {
    std::ofstream out(starts);
    for (int i = 0; i < 20; ++i) out << "v" << i << "\n";
  }
  std::string out_path = cluster.dir.sub("bfs.txt");
  ASSERT_EQ(run_cli({cluster.bin, "bfs", "--hostfile", cluster.hostfile, "--starts", starts,
                     "--depth", "3", "--threads", "2", "--out", out_path},
                    cluster.dir.sub("bfs.log")),
            0);
  std::string results = read_file(out_path);
  EXPECT_EQ(std::count(results.begin(), results.end(), '\n'), 20);
  cluster.stop_gracefully();
}
