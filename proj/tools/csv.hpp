#pragma once

// Minimal CSV reading for the loader formats: a vertex file with a header
// row naming properties, and a header-less edge file of
// source,target,weight. No quoting or escaping.

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "shardgraph/props.hpp"

namespace shardgraph::tools {

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
    fields.back().pop_back();
  return fields;
}

// int64 if it parses fully as one, else double, else string.
inline PropValue parse_prop_value(const std::string &text) {
  if (!text.empty()) {
    int64_t i = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
    if (ec == std::errc() && p == text.data() + text.size()) return PropValue(i);
    char *end = nullptr;
    double d = strtod(text.c_str(), &end);
    if (end == text.c_str() + text.size()) return PropValue(d);
  }
  return PropValue(text);
}

struct VertexRow {
  std::string external;
  std::vector<NamedProp> props;
};

struct EdgeRow {
  std::string src;
  std::string tgt;
  std::vector<NamedProp> props;
};

class VertexCsvReader {
 public:
  explicit VertexCsvReader(const std::string &path) : in_(path) {
    if (!in_) throw Error(ErrorCode::io_error, "cannot open " + path);
    std::string header;
    if (std::getline(in_, header)) {
      auto fields = split_csv_line(header);
      prop_names_.assign(fields.begin() + (fields.empty() ? 0 : 1), fields.end());
    }
  }

  // Returns false at end of file; malformed rows are skipped and counted.
  bool next(VertexRow &row) {
    std::string line;
    while (std::getline(in_, line)) {
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.empty() || fields[0].empty() || fields.size() > prop_names_.size() + 1) {
        ++skipped_;
        continue;
      }
      row.external = fields[0];
      row.props.clear();
      for (size_t i = 1; i < fields.size(); ++i)
        row.props.push_back({prop_names_[i - 1], parse_prop_value(fields[i])});
      return true;
    }
    return false;
  }

  uint64_t skipped() const { return skipped_; }
  const std::vector<std::string> &prop_names() const { return prop_names_; }

 private:
  std::ifstream in_;
  std::vector<std::string> prop_names_;
  uint64_t skipped_ = 0;
};

class EdgeCsvReader {
 public:
  explicit EdgeCsvReader(const std::string &path) : in_(path) {
    if (!in_) throw Error(ErrorCode::io_error, "cannot open " + path);
  }

  bool next(EdgeRow &row) {
    std::string line;
    while (std::getline(in_, line)) {
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
        ++skipped_;
        continue;
      }
      row.src = fields[0];
      row.tgt = fields[1];
      row.props.clear();
      if (fields.size() == 3 && !fields[2].empty()) {
        char *end = nullptr;
        double w = strtod(fields[2].c_str(), &end);
        if (end != fields[2].c_str() + fields[2].size()) {
          ++skipped_;
          continue;  // third column must be a double
        }
        row.props.push_back({"weight", PropValue(w)});
      }
      return true;
    }
    return false;
  }

  uint64_t skipped() const { return skipped_; }

 private:
  std::ifstream in_;
  uint64_t skipped_ = 0;
};

}  // namespace shardgraph::tools
