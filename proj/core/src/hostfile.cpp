#include "shardgraph/hostfile.hpp"

#include <fstream>
#include <sstream>

namespace shardgraph {

ClusterView parse_hostfile_text(const std::string &text) {
  ClusterView view;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Endpoint ep;
    int port = 0;
    if (!(ls >> ep.host >> port) || port <= 0 || port > 65535)
      throw Error(ErrorCode::invalid_argument, "bad hostfile line: " + line);
    ep.port = static_cast<uint16_t>(port);
    ep.node_id = static_cast<uint32_t>(view.endpoints.size());
    view.endpoints.push_back(std::move(ep));
  }
  if (view.endpoints.empty())
    throw Error(ErrorCode::invalid_argument, "hostfile defines no nodes");
  return view;
}

ClusterView parse_hostfile(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read hostfile: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_hostfile_text(buf.str());
}

}  // namespace shardgraph
