#include "gaia/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "gaia/errors.hpp"
#include "gaia/rng.hpp"

namespace gaia {

using nlohmann::json;

std::string_view relation_name(Relation rel) {
  return rel == Relation::SupplyChain ? "supply" : "owner";
}

Relation parse_relation(std::string_view name) {
  if (name == "supply") return Relation::SupplyChain;
  if (name == "owner") return Relation::SameOwner;
  throw DataError("unknown relation '" + std::string(name) + "' (expected supply|owner)");
}

ESellerGraph::ESellerGraph(std::size_t t_max, std::size_t d_temporal, std::size_t d_static)
    : t_max_(t_max), d_temporal_(d_temporal), d_static_(d_static) {}

std::size_t ESellerGraph::add_node(SellerNode node) {
  const std::string& id = node.id;
  if (id.empty()) throw DataError("node with empty id");
  if (index_.contains(id)) throw DataError("duplicate node id '" + id + "'");
  const std::size_t len = node.observed_len();
  if (len < 1 || len > t_max_) {
    throw DataError("node '" + id + "': observed length " + std::to_string(len) +
                    " outside [1, " + std::to_string(t_max_) + "]");
  }
  for (double v : node.gmv) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DataError("node '" + id + "': negative or non-finite GMV " + std::to_string(v));
    }
  }
  if (node.temporal_feats.size() != len * d_temporal_) {
    throw DataError("node '" + id + "': temporal features must be " + std::to_string(len) +
                    " x " + std::to_string(d_temporal_));
  }
  if (node.static_feats.size() != d_static_) {
    throw DataError("node '" + id + "': static features must have " +
                    std::to_string(d_static_) + " values");
  }
  const std::size_t index = nodes_.size();
  index_.emplace(id, index);
  nodes_.push_back(std::move(node));
  in_adj_.emplace_back();
  return index;
}

void ESellerGraph::add_edge(Edge edge) {
  auto src = find(edge.src);
  if (!src) throw DataError("dangling edge: unknown source node '" + edge.src + "'");
  auto dst = find(edge.dst);
  if (!dst) throw DataError("dangling edge: unknown target node '" + edge.dst + "'");
  if (*src == *dst) throw DataError("self-loop on node '" + edge.src + "'");
  in_adj_[*dst].push_back({*src, edge.relation});
  if (edge.relation == Relation::SameOwner) in_adj_[*src].push_back({*dst, edge.relation});
  edges_.push_back(std::move(edge));
}

std::optional<std::size_t> ESellerGraph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ESellerGraph::index_of(std::string_view id) const {
  auto i = find(id);
  if (!i) throw NotFoundError("unknown node '" + std::string(id) + "'");
  return *i;
}

std::size_t ESellerGraph::edge_count(Relation rel) const {
  return static_cast<std::size_t>(std::count_if(
      edges_.begin(), edges_.end(), [rel](const Edge& e) { return e.relation == rel; }));
}

namespace {

template <typename T>
T field(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) {
    throw DataError("line " + std::to_string(line) + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line) + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

ESellerGraph read_graph(std::istream& in) {
  struct NodeRec {
    SellerNode node;
    std::size_t d_temporal;
    std::size_t line;
  };
  std::optional<std::size_t> t_max;
  std::vector<NodeRec> node_recs;
  std::vector<std::pair<Edge, std::size_t>> edge_recs;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line) + ": parse error: " + e.what());
    }
    if (!rec.is_object()) throw DataError("line " + std::to_string(line) + ": not an object");
    const auto kind = field<std::string>(rec, "kind", line);
    if (kind == "meta") {
      t_max = field<std::size_t>(rec, "t_max", line);
    } else if (kind == "node") {
      SellerNode node;
      node.id = field<std::string>(rec, "id", line);
      node.gmv = field<std::vector<double>>(rec, "gmv", line);
      auto tf = field<std::vector<std::vector<double>>>(rec, "tf", line);
      node.static_feats = field<std::vector<double>>(rec, "sf", line);
      if (tf.size() != node.gmv.size()) {
        throw DataError("line " + std::to_string(line) + ": tf has " + std::to_string(tf.size()) +
                        " rows but gmv has " + std::to_string(node.gmv.size()) + " months");
      }
      const std::size_t d = tf.empty() ? 0 : tf.front().size();
      for (const auto& row : tf) {
        if (row.size() != d) throw DataError("line " + std::to_string(line) + ": ragged tf");
        node.temporal_feats.insert(node.temporal_feats.end(), row.begin(), row.end());
      }
      for (double v : node.gmv) {
        if (v < 0.0) {
          throw DataError("line " + std::to_string(line) + ": negative GMV in node '" +
                          node.id + "'");
        }
      }
      node_recs.push_back({std::move(node), d, line});
    } else if (kind == "edge") {
      Edge e;
      e.src = field<std::string>(rec, "src", line);
      e.dst = field<std::string>(rec, "dst", line);
      try {
        e.relation = parse_relation(field<std::string>(rec, "rel", line));
      } catch (const DataError& err) {
        throw DataError("line " + std::to_string(line) + ": " + err.what());
      }
      edge_recs.emplace_back(std::move(e), line);
    } else {
      throw DataError("line " + std::to_string(line) + ": unknown record kind '" + kind + "'");
    }
  }

  std::size_t longest = 1;
  for (const auto& r : node_recs) longest = std::max(longest, r.node.observed_len());
  const std::size_t d_t = node_recs.empty() ? 0 : node_recs.front().d_temporal;
  const std::size_t d_s = node_recs.empty() ? 0 : node_recs.front().node.static_feats.size();
  ESellerGraph graph(t_max.value_or(longest), d_t, d_s);
  for (auto& r : node_recs) {
    try {
      graph.add_node(std::move(r.node));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(r.line) + ": " + e.what());
    }
  }
  for (auto& [e, l] : edge_recs) {
    try {
      graph.add_edge(std::move(e));
    } catch (const DataError& err) {
      throw DataError("line " + std::to_string(l) + ": " + err.what());
    }
  }
  return graph;
}

void write_graph(const ESellerGraph& graph, std::ostream& out) {
  out << json{{"kind", "meta"}, {"t_max", graph.t_max()}}.dump() << '\n';
  const std::size_t d = graph.d_temporal();
  for (const auto& n : graph.nodes()) {
    json tf = json::array();
    for (std::size_t t = 0; t < n.observed_len(); ++t) {
      tf.push_back(std::vector<double>(n.temporal_feats.begin() + t * d,
                                       n.temporal_feats.begin() + (t + 1) * d));
    }
    json rec{{"kind", "node"}, {"id", n.id}, {"gmv", n.gmv}, {"tf", std::move(tf)},
             {"sf", n.static_feats}};
    out << rec.dump() << '\n';
  }
  for (const auto& e : graph.edges()) {
    json rec{{"kind", "edge"}, {"src", e.src}, {"dst", e.dst},
             {"rel", std::string(relation_name(e.relation))}};
    out << rec.dump() << '\n';
  }
}

ESellerGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file: " + path.string());
  return read_graph(in);
}

void save_graph(const ESellerGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write graph file: " + path.string());
  write_graph(graph, out);
}

PaddedSeries pad_and_mask(const SellerNode& node, std::size_t t_max) {
  const std::size_t len = node.observed_len();
  if (len > t_max) {
    throw DimensionError("node '" + node.id + "': series of " + std::to_string(len) +
                         " months exceeds T_max = " + std::to_string(t_max));
  }
  const std::size_t d = len ? node.temporal_feats.size() / len : 0;
  const std::size_t offset = t_max - len;
  PaddedSeries p;
  p.gmv.assign(t_max, 0.0);
  p.temporal.assign(t_max * d, 0.0);
  p.valid.assign(t_max, 0);
  std::copy(node.gmv.begin(), node.gmv.end(), p.gmv.begin() + offset);
  std::copy(node.temporal_feats.begin(), node.temporal_feats.end(),
            p.temporal.begin() + offset * d);
  std::fill(p.valid.begin() + offset, p.valid.end(), 1);
  return p;
}

std::optional<std::size_t> EgoSubgraph::local_index(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return i;
  return std::nullopt;
}

EgoSubgraph extract_ego(const ESellerGraph& graph, std::string_view center, std::size_t hops,
                        std::size_t max_neighbors_per_hop, std::uint64_t seed) {
  return extract_ego(graph, graph.index_of(center), hops, max_neighbors_per_hop, seed);
}

EgoSubgraph extract_ego(const ESellerGraph& graph, std::size_t center, std::size_t hops,
                        std::size_t max_neighbors_per_hop, std::uint64_t seed) {
  if (center >= graph.size()) throw NotFoundError("center index out of range");
  if (hops < 1) throw std::invalid_argument("extract_ego: hops must be >= 1");
  Rng rng(seed);
  EgoSubgraph ego;
  std::unordered_map<std::size_t, std::size_t> local;
  auto admit = [&](std::size_t global, std::size_t hop) {
    auto [it, inserted] = local.emplace(global, ego.nodes.size());
    if (inserted) {
      ego.nodes.push_back(global);
      ego.ids.push_back(graph.node(global).id);
      ego.hop.push_back(hop);
      ego.in_edges.emplace_back();
    }
    return std::pair{it->second, inserted};
  };

  admit(center, 0);
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (ego.hop[u] >= hops) continue;
    const auto& in = graph.in_neighbors(ego.nodes[u]);
    std::vector<std::size_t> pick(in.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    if (pick.size() > max_neighbors_per_hop) {
      for (std::size_t i = 0; i < max_neighbors_per_hop; ++i)
        std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
      pick.resize(max_neighbors_per_hop);
      std::sort(pick.begin(), pick.end());
    }
    for (std::size_t i : pick) {
      auto [v, fresh] = admit(in[i].src, ego.hop[u] + 1);
      ego.in_edges[u].push_back({v, in[i].relation});
      if (fresh) queue.push_back(v);
    }
  }

  const std::size_t n = ego.size();
  const std::size_t t_max = graph.t_max();
  const std::size_t d_t = graph.d_temporal();
  const std::size_t d_s = graph.d_static();
  ego.t_max = t_max;
  ego.d_temporal = d_t;
  ego.d_static = d_s;
  ego.padded_gmv.reserve(n * t_max);
  ego.padded_temporal.reserve(n * t_max * d_t);
  ego.valid_mask.reserve(n * t_max);
  ego.static_feats.reserve(n * d_s);
  for (std::size_t g : ego.nodes) {
    const auto& node = graph.node(g);
    PaddedSeries p = pad_and_mask(node, t_max);
    ego.padded_gmv.insert(ego.padded_gmv.end(), p.gmv.begin(), p.gmv.end());
    ego.padded_temporal.insert(ego.padded_temporal.end(), p.temporal.begin(), p.temporal.end());
    ego.valid_mask.insert(ego.valid_mask.end(), p.valid.begin(), p.valid.end());
    ego.static_feats.insert(ego.static_feats.end(), node.static_feats.begin(),
                            node.static_feats.end());
  }
  return ego;
}

}  // namespace gaia
