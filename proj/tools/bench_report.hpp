#pragma once

// Throughput reporting for the loaders and the query harness: totals, rates,
// per-block rates, and the proxy-side message counters, printed as aligned
// text and optionally written as a line-per-metric file.

#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "shardgraph/rpc.hpp"

namespace shardgraph::tools {

class BenchReport {
 public:
  BenchReport(std::string op, uint64_t block_size) : op_(std::move(op)), block_(block_size) {}

  void start() { t0_ = std::chrono::steady_clock::now(); }

  // Thread-safe item accounting; emits a block entry every block_size items.
  void add_items(uint64_t n) {
    std::lock_guard lk(mu_);
    items_ += n;
    while (items_ - block_start_items_ >= block_) {
      auto now = std::chrono::steady_clock::now();
      double secs = std::chrono::duration<double>(now - block_start_t_).count();
      blocks_.emplace_back(block_, secs > 0 ? block_ / secs : 0.0);
      block_start_items_ += block_;
      block_start_t_ = now;
    }
  }
  void add_skipped(uint64_t n) {
    std::lock_guard lk(mu_);
    skipped_ += n;
  }
  void add_failed(uint64_t n) {
    std::lock_guard lk(mu_);
    failed_ += n;
  }

  void finish(const rpc::MessageCounters &counters) {
    auto now = std::chrono::steady_clock::now();
    wall_s_ = std::chrono::duration<double>(now - t0_).count();
    counters_ = counters;
    // Trailing partial block, so the block counts sum to the total.
    std::lock_guard lk(mu_);
    if (items_ > block_start_items_) {
      double secs = std::chrono::duration<double>(now - block_start_t_).count();
      uint64_t n = items_ - block_start_items_;
      blocks_.emplace_back(n, secs > 0 ? n / secs : 0.0);
      block_start_items_ = items_;
    }
  }

  uint64_t items() const { return items_; }
  double wall_seconds() const { return wall_s_; }
  double rate() const { return wall_s_ > 0 ? items_ / wall_s_ : 0.0; }

  void print(FILE *out) const {
    fprintf(out, "%-14s %12s %10s %14s\n", "operation", "items", "wall(s)", "items/sec");
    fprintf(out, "%-14s %12llu %10.3f %14.1f\n", op_.c_str(),
            static_cast<unsigned long long>(items_), wall_s_, rate());
    if (skipped_) fprintf(out, "  skipped rows: %llu\n", (unsigned long long)skipped_);
    if (failed_) fprintf(out, "  failed items: %llu\n", (unsigned long long)failed_);
    for (size_t i = 0; i < blocks_.size(); ++i)
      fprintf(out, "  block %3zu  %12llu items  %14.1f items/sec\n", i + 1,
              (unsigned long long)blocks_[i].first, blocks_[i].second);
    uint64_t sent = counters_.total_sent(), recv = counters_.total_received();
    if (sent || recv)
      fprintf(out, "  messages: sent %llu, received %llu\n", (unsigned long long)sent,
              (unsigned long long)recv);
  }

  void write_metrics(const std::string &path) const {
    std::ofstream out(path);
    out << "operation\t" << op_ << "\n";
    out << "items\t" << items_ << "\n";
    out << "skipped\t" << skipped_ << "\n";
    out << "failed\t" << failed_ << "\n";
    out << "wall_seconds\t" << wall_s_ << "\n";
    out << "items_per_sec\t" << rate() << "\n";
    for (size_t i = 0; i < blocks_.size(); ++i) {
      out << "block_" << i + 1 << "_items\t" << blocks_[i].first << "\n";
      out << "block_" << i + 1 << "_rate\t" << blocks_[i].second << "\n";
    }
    out << "messages_sent\t" << counters_.total_sent() << "\n";
    out << "messages_received\t" << counters_.total_received() << "\n";
    for (const auto &[op, c] : counters_.per_opcode)
      out << "opcode_" << op << "_sent\t" << c.sent << "\n";
  }

 private:
  std::string op_;
  uint64_t block_;
  std::mutex mu_;
  uint64_t items_ = 0, skipped_ = 0, failed_ = 0;
  uint64_t block_start_items_ = 0;
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point block_start_t_ = std::chrono::steady_clock::now();
  std::vector<std::pair<uint64_t, double>> blocks_;
  double wall_s_ = 0;
  rpc::MessageCounters counters_;
};

}  // namespace shardgraph::tools
