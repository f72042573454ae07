#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gaia {

enum class Relation : std::uint8_t {
  SupplyChain = 0,  // src = supplier, dst = retailer
  SameOwner = 1,    // stored once, symmetric in the adjacency
};

inline constexpr std::size_t kRelationCount = 2;

std::string_view relation_name(Relation rel);
Relation parse_relation(std::string_view name);

struct SellerNode {
  std::string id;
  // Monthly GMV, oldest first; length is the observed history.
  std::vector<double> gmv;
  // Row-major [observed_len x D_T].
  std::vector<double> temporal_feats;
  std::vector<double> static_feats;

  std::size_t observed_len() const { return gmv.size(); }
};

struct Edge {
  std::string src;
  std::string dst;
  Relation relation = Relation::SupplyChain;
};

struct InEdge {
  std::size_t src;
  Relation relation;
};

// Seller graph with per-node in-neighbor lists. Immutable once built; every
// mutation validates the node and edge invariants.
class ESellerGraph {
 public:
  ESellerGraph(std::size_t t_max, std::size_t d_temporal, std::size_t d_static);

  std::size_t add_node(SellerNode node);
  void add_edge(Edge edge);

  std::size_t size() const { return nodes_.size(); }
  std::size_t t_max() const { return t_max_; }
  std::size_t d_temporal() const { return d_temporal_; }
  std::size_t d_static() const { return d_static_; }

  const std::vector<SellerNode>& nodes() const { return nodes_; }
  const SellerNode& node(std::size_t index) const { return nodes_.at(index); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<InEdge>& in_neighbors(std::size_t index) const { return in_adj_.at(index); }

  std::optional<std::size_t> find(std::string_view id) const;
  // Throws NotFoundError naming the id.
  std::size_t index_of(std::string_view id) const;
  std::size_t edge_count(Relation rel) const;

 private:
  std::size_t t_max_;
  std::size_t d_temporal_;
  std::size_t d_static_;
  std::vector<SellerNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<InEdge>> in_adj_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSONL graph I/O. One record per line: an optional
// {"kind":"meta","t_max":..} header, then node records
// {"kind":"node","id","gmv","tf","sf"} and edge records
// {"kind":"edge","src","dst","rel":"supply"|"owner"}.
ESellerGraph read_graph(std::istream& in);
void write_graph(const ESellerGraph& graph, std::ostream& out);
ESellerGraph load_graph(const std::filesystem::path& path);
void save_graph(const ESellerGraph& graph, const std::filesystem::path& path);

struct PaddedSeries {
  std::vector<double> gmv;            // [T_max]
  std::vector<double> temporal;       // [T_max x D_T]
  std::vector<std::uint8_t> valid;    // [T_max]
};

// Right-aligns a node's history into T_max slots: the latest month sits at
// T_max - 1 and the unobserved prefix is zero with valid = 0.
PaddedSeries pad_and_mask(const SellerNode& node, std::size_t t_max);

struct LocalInEdge {
  std::size_t src;  // local index
  Relation relation;
};

// Center node plus its sampled in-neighborhood, with padded inputs for each
// local node. Local index 0 is the center.
struct EgoSubgraph {
  std::size_t center = 0;
  std::vector<std::size_t> nodes;   // local -> global index
  std::vector<std::string> ids;     // local -> node id
  std::vector<std::size_t> hop;     // BFS distance from the center
  std::vector<std::vector<LocalInEdge>> in_edges;

  std::size_t t_max = 0;
  std::size_t d_temporal = 0;
  std::size_t d_static = 0;
  std::vector<double> padded_gmv;        // [n x T_max]
  std::vector<double> padded_temporal;   // [n x T_max x D_T]
  std::vector<double> static_feats;      // [n x D_S]
  std::vector<std::uint8_t> valid_mask;  // [n x T_max]
  std::vector<double> target;            // [T'], empty at inference

  std::size_t size() const { return nodes.size(); }
  std::optional<std::size_t> local_index(std::string_view id) const;
};

// BFS over in-edges up to `hops`. A node whose in-degree exceeds
// `max_neighbors_per_hop` keeps a uniform sample of that many in-neighbors,
// drawn from an RNG seeded with `seed`.
EgoSubgraph extract_ego(const ESellerGraph& graph, std::string_view center, std::size_t hops,
                        std::size_t max_neighbors_per_hop, std::uint64_t seed);
EgoSubgraph extract_ego(const ESellerGraph& graph, std::size_t center, std::size_t hops,
                        std::size_t max_neighbors_per_hop, std::uint64_t seed);

}  // namespace gaia
