#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shardgraph/errors.hpp"

namespace shardgraph {

struct Endpoint {
  uint32_t node_id = 0;
  std::string host;
  uint16_t port = 0;
};

// Cluster membership from a hostfile: one `host port` per line, line index =
// node id. The query manager is the last line by convention; every earlier
// line is a shard.
struct ClusterView {
  std::vector<Endpoint> endpoints;

  uint32_t shard_count() const {
    return endpoints.size() > 1 ? static_cast<uint32_t>(endpoints.size() - 1) : 0;
  }
  uint32_t qm_node() const {
    if (endpoints.empty()) throw Error(ErrorCode::invalid_argument, "empty cluster");
    return static_cast<uint32_t>(endpoints.size() - 1);
  }
  const Endpoint &endpoint(uint32_t node) const {
    if (node >= endpoints.size())
      throw Error(ErrorCode::invalid_argument, "node " + std::to_string(node) + " out of range");
    return endpoints[node];
  }
};

ClusterView parse_hostfile(const std::string &path);
ClusterView parse_hostfile_text(const std::string &text);

}  // namespace shardgraph
