#include "shardgraph/dump.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <unordered_map>

#include "shardgraph/dist_graph.hpp"

namespace shardgraph::dump {

void parse_shard_dump(const std::string &body, GraphDump &into) {
  wire::PayloadReader r(body);
  uint32_t nv = r.u32();
  for (uint32_t i = 0; i < nv; ++i) {
    DumpVertex v;
    v.ext = std::string(r.bytes());
    v.vid = r.u64();
    v.label = std::string(r.bytes());
    v.props = dist::read_props(r);
    into.vertices.push_back(std::move(v));
  }
  uint32_t no = r.u32();
  for (uint32_t i = 0; i < no; ++i) {
    DumpOutEdge e;
    e.src = r.u64();
    e.tgt = r.u64();
    e.label = std::string(r.bytes());
    e.eid = r.u64();
    e.props = dist::read_props(r);
    into.out_edges.push_back(std::move(e));
  }
  uint32_t ni = r.u32();
  for (uint32_t i = 0; i < ni; ++i) {
    DumpInEdge e;
    e.tgt = r.u64();
    e.src = r.u64();
    e.label = r.u8();
    e.eid = r.u64();
    into.in_edges.push_back(e);
  }
}

GraphDump collect_cluster_dump(rpc::RpcNode &node, uint32_t shard_count) {
  GraphDump dump;
  for (uint32_t s = 0; s < shard_count; ++s)
    parse_shard_dump(node.call(s, wire::kOpDumpShard, {}), dump);
  return dump;
}

namespace {

std::string props_csv(const std::vector<NamedProp> &props) {
  std::vector<std::pair<std::string, std::string>> items;
  items.reserve(props.size());
  for (const NamedProp &p : props) items.emplace_back(p.name, prop_value_to_string(p.value));
  std::sort(items.begin(), items.end());
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i].first + "=" + items[i].second;
  }
  return out;
}

}  // namespace

std::string canonical_text(const GraphDump &dump) {
  std::unordered_map<VertexId, const std::string *> ext_of;
  ext_of.reserve(dump.vertices.size());
  for (const DumpVertex &v : dump.vertices) ext_of[v.vid] = &v.ext;
  auto ext_name = [&](VertexId v) -> std::string {
    auto it = ext_of.find(v);
    if (it != ext_of.end()) return *it->second;
    return "<dangling:" + std::to_string(v) + ">";
  };

  std::vector<std::string> lines;
  lines.reserve(dump.vertices.size() + dump.out_edges.size());
  for (const DumpVertex &v : dump.vertices)
    lines.push_back("V\t" + v.ext + "\t" + v.label + "\t" + props_csv(v.props));

  // Group outgoing edges by (src, tgt); within one pair order by the
  // rendered properties first so equal-content edges swap freely, then by
  // edge id for stability.
  struct Rendered {
    std::string src, tgt, label, props;
    EdgeId eid;
  };
  std::map<std::pair<std::string, std::string>, std::vector<Rendered>> groups;
  for (const DumpOutEdge &e : dump.out_edges) {
    Rendered r;
    r.src = ext_name(e.src);
    r.tgt = ext_name(e.tgt);
    r.label = e.label;
    r.props = props_csv(e.props);
    r.eid = e.eid;
    groups[{r.src, r.tgt}].push_back(std::move(r));
  }
  for (auto &[key, group] : groups) {
    std::sort(group.begin(), group.end(), [](const Rendered &a, const Rendered &b) {
      if (a.label != b.label) return a.label < b.label;
      if (a.props != b.props) return a.props < b.props;
      return a.eid < b.eid;
    });
    for (size_t k = 0; k < group.size(); ++k) {
      const Rendered &r = group[k];
      lines.push_back("E\t" + r.src + "\t" + r.tgt + "\t" + r.label + "\t" + std::to_string(k) +
                      "\t" + r.props);
    }
  }

  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const std::string &line : lines) {
    out += line;
    out += "\n";
  }
  return out;
}

uint64_t pairing_violations(const GraphDump &dump) {
  std::map<std::tuple<VertexId, VertexId, EdgeId>, int64_t> balance;
  for (const DumpOutEdge &e : dump.out_edges) balance[{e.src, e.tgt, e.eid}]++;
  for (const DumpInEdge &e : dump.in_edges) balance[{e.src, e.tgt, e.eid}]--;
  uint64_t violations = 0;
  for (const auto &[key, count] : balance)
    violations += static_cast<uint64_t>(count < 0 ? -count : count);
  return violations;
}

}  // namespace shardgraph::dump
