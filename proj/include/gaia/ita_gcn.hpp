#pragma once

#include <optional>
#include <vector>

#include "gaia/graph.hpp"
#include "gaia/rng.hpp"
#include "gaia/tensor.hpp"

namespace gaia {

// Convolutional attention unit: causal convolutions produce Q (width 3) from
// the query node and K (width 3), V (width 1) from the key node.
struct CAUParams {
  Tensor query;  // [3 x C x C]
  Tensor key;    // [3 x C x C]
  Tensor value;  // [1 x C x C]
};

struct LayerParams {
  CAUParams inter;
  CAUParams intra;
  Tensor mu;               // [T]
  Tensor src_kernel;       // L^s, [1 x C x 1], applied to the receiving node
  Tensor dst_kernel;       // L^d, [1 x C x 1], applied to the neighbor
  Tensor edge_rel_weight;  // [2], per-relation offset added to g(u, v)
};

// Plain masked dot-product self-attention with linear Q/K/V, used when the
// temporal-shift-aware attention is ablated.
struct SelfAttentionParams {
  Tensor W_Q;  // [C x C]
  Tensor W_K;
  Tensor W_V;
};

struct HeadParams {
  Tensor kernel;  // L^P, [1 x C x 1]
  Tensor weight;  // W^P, [T x T']
  Tensor bias;    // b^P, [T']
};

struct LayerOptions {
  bool use_neighbors = true;
  // Reuse the inter-neighbor CAU weights for the self term.
  bool share_cau = false;
  bool use_edge_type = true;
};

struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t query = 0;  // local index u
  std::size_t key = 0;    // local index v (== u for the self term)
  bool intra = false;
  double alpha = 1.0;
  Tensor weights;  // [T x T] post-softmax, row = query time
};

struct AttentionTrace {
  std::vector<AttentionRecord> records;
  const AttentionRecord* find(std::size_t layer, std::size_t query, std::size_t key,
                              bool intra) const;
};

CAUParams init_cau(std::size_t channels, Rng& rng);
LayerParams init_layer(std::size_t t_max, std::size_t channels, Rng& rng);
SelfAttentionParams init_self_attention(std::size_t channels, Rng& rng);
HeadParams init_head(std::size_t t_max, std::size_t horizon, std::size_t channels, Rng& rng);

// softmax(Q_u K_v^T / sqrt(C) + M) V_v. When `attention` is non-null it
// receives the post-softmax matrix.
Tensor cau(const CAUParams& p, const Tensor& h_u, const Tensor& h_v, const Tensor& mask,
           Tensor* attention = nullptr);

// g(u, v) = mu^T tanh(L^s * H_u + L^d * H_v) + edge_rel_weight[rel], as [1 x 1].
Tensor aggregation_logit(const LayerParams& p, const Tensor& h_u, const Tensor& h_v, Relation rel,
                         bool use_edge_type = true);

// One ITA-GCN layer: for each local node u,
//   H'_u = sum_v alpha_uv CAU_inter(H_u, H_v) + CAU_intra(H_u, H_u)
// over its in-neighbors v. Nodes with active[u] == false are passed through
// unchanged (the model skips nodes the center can no longer reach).
std::vector<Tensor> ita_gcn_layer(const LayerParams& p, const EgoSubgraph& ego,
                                  const std::vector<Tensor>& h, const LayerOptions& options = {},
                                  const std::vector<bool>* active = nullptr,
                                  AttentionTrace* trace = nullptr, std::size_t layer_index = 0);

// Ablated layer: masked self-attention on H_u plus the mean of neighbor
// representations.
std::vector<Tensor> self_attention_layer(const SelfAttentionParams& p, const EgoSubgraph& ego,
                                         const std::vector<Tensor>& h, bool use_neighbors,
                                         const std::vector<bool>* active = nullptr,
                                         AttentionTrace* trace = nullptr,
                                         std::size_t layer_index = 0);

// relu([L^P * (H_L + E)] W^P + b^P) -> [1 x T']
Tensor predict_head(const HeadParams& p, const Tensor& h_last, const Tensor& e);

}  // namespace gaia
