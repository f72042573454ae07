#include "gaia/ita_gcn.hpp"

#include <cmath>

#include "gaia/encoder.hpp"
#include "gaia/errors.hpp"
#include "gaia/ops.hpp"

namespace gaia {

const AttentionRecord* AttentionTrace::find(std::size_t layer, std::size_t query, std::size_t key,
                                            bool intra) const {
  for (const auto& r : records)
    if (r.layer == layer && r.query == query && r.key == key && r.intra == intra) return &r;
  return nullptr;
}

CAUParams init_cau(std::size_t channels, Rng& rng) {
  const std::size_t c = channels;
  return {xavier_uniform({3, c, c}, 3 * c, 3 * c, rng), xavier_uniform({3, c, c}, 3 * c, 3 * c, rng),
          xavier_uniform({1, c, c}, c, c, rng)};
}

LayerParams init_layer(std::size_t t_max, std::size_t channels, Rng& rng) {
  LayerParams p;
  p.inter = init_cau(channels, rng);
  p.intra = init_cau(channels, rng);
  p.mu = xavier_uniform({t_max}, t_max, 1, rng);
  p.src_kernel = xavier_uniform({1, channels, 1}, channels, 1, rng);
  p.dst_kernel = xavier_uniform({1, channels, 1}, channels, 1, rng);
  p.edge_rel_weight = Tensor({kRelationCount}, true);
  return p;
}

SelfAttentionParams init_self_attention(std::size_t channels, Rng& rng) {
  const std::size_t c = channels;
  return {xavier_uniform({c, c}, c, c, rng), xavier_uniform({c, c}, c, c, rng),
          xavier_uniform({c, c}, c, c, rng)};
}

HeadParams init_head(std::size_t t_max, std::size_t horizon, std::size_t channels, Rng& rng) {
  return {xavier_uniform({1, channels, 1}, channels, 1, rng),
          xavier_uniform({t_max, horizon}, t_max, horizon, rng), Tensor({horizon}, true)};
}

Tensor cau(const CAUParams& p, const Tensor& h_u, const Tensor& h_v, const Tensor& mask,
           Tensor* attention) {
  if (h_u.shape() != h_v.shape()) {
    throw DimensionError("cau: representation shapes differ, " + shape_str(h_u.shape()) +
                         " vs " + shape_str(h_v.shape()));
  }
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(h_u.cols()));
  const Tensor q = ops::conv1d_causal(h_u, p.query);
  const Tensor k = ops::conv1d_causal(h_v, p.key);
  const Tensor v = ops::conv1d_causal(h_v, p.value);
  const Tensor weights = ops::softmax_masked(ops::scale(ops::matmul_nt(q, k), inv_sqrt_c), mask);
  if (attention) *attention = weights;
  return ops::matmul(weights, v);
}

namespace {

Tensor relation_offset(const LayerParams& p, Relation rel) {
  return ops::pick(p.edge_rel_weight, static_cast<std::size_t>(rel));
}

Tensor logit_from_source_term(const LayerParams& p, const Tensor& src_term, const Tensor& h_v,
                              Relation rel, bool use_edge_type) {
  const Tensor g = ops::dot(p.mu, ops::tanh(ops::add(src_term, ops::conv1d_causal(h_v, p.dst_kernel))));
  return use_edge_type ? ops::add(g, relation_offset(p, rel)) : g;
}

bool is_active(const std::vector<bool>* active, std::size_t u) {
  return active == nullptr || (*active)[u];
}

}  // namespace

Tensor aggregation_logit(const LayerParams& p, const Tensor& h_u, const Tensor& h_v, Relation rel,
                         bool use_edge_type) {
  return logit_from_source_term(p, ops::conv1d_causal(h_u, p.src_kernel), h_v, rel, use_edge_type);
}

std::vector<Tensor> ita_gcn_layer(const LayerParams& p, const EgoSubgraph& ego,
                                  const std::vector<Tensor>& h, const LayerOptions& options,
                                  const std::vector<bool>* active, AttentionTrace* trace,
                                  std::size_t layer_index) {
  if (h.size() != ego.size()) {
    throw DimensionError("ita_gcn_layer: " + std::to_string(h.size()) +
                         " representations for " + std::to_string(ego.size()) + " nodes");
  }
  const Tensor mask = ops::causal_mask(h.empty() ? 0 : h.front().rows());
  const CAUParams& self_cau = options.share_cau ? p.inter : p.intra;
  std::vector<Tensor> out(h.size());
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (!is_active(active, u)) {
      out[u] = h[u];
      continue;
    }
    Tensor self_weights;
    Tensor acc = cau(self_cau, h[u], h[u], mask, trace ? &self_weights : nullptr);
    if (trace) trace->records.push_back({layer_index, u, u, true, 1.0, self_weights});

    const auto& nbrs = ego.in_edges[u];
    if (!options.use_neighbors || nbrs.empty()) {
      out[u] = acc;
      continue;
    }
    const Tensor src_term = ops::conv1d_causal(h[u], p.src_kernel);
    std::vector<Tensor> logits;
    logits.reserve(nbrs.size());
    for (const auto& e : nbrs) {
      logits.push_back(logit_from_source_term(p, src_term, h[e.src], e.relation,
                                              options.use_edge_type));
    }
    const Tensor row = ops::concat_lastdim(logits);
    const Tensor alpha = ops::softmax_masked(row, Tensor(row.shape()));
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      Tensor weights;
      const Tensor msg = cau(p.inter, h[u], h[nbrs[i].src], mask, trace ? &weights : nullptr);
      acc = ops::add(acc, ops::mul_scalar(msg, ops::pick(alpha, i)));
      if (trace) trace->records.push_back({layer_index, u, nbrs[i].src, false, alpha[i], weights});
    }
    out[u] = acc;
  }
  return out;
}

std::vector<Tensor> self_attention_layer(const SelfAttentionParams& p, const EgoSubgraph& ego,
                                         const std::vector<Tensor>& h, bool use_neighbors,
                                         const std::vector<bool>* active, AttentionTrace* trace,
                                         std::size_t layer_index) {
  if (h.size() != ego.size()) {
    throw DimensionError("self_attention_layer: " + std::to_string(h.size()) +
                         " representations for " + std::to_string(ego.size()) + " nodes");
  }
  const Tensor mask = ops::causal_mask(h.empty() ? 0 : h.front().rows());
  std::vector<Tensor> out(h.size());
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (!is_active(active, u)) {
      out[u] = h[u];
      continue;
    }
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(h[u].cols()));
    const Tensor q = ops::matmul(h[u], p.W_Q);
    const Tensor k = ops::matmul(h[u], p.W_K);
    const Tensor v = ops::matmul(h[u], p.W_V);
    const Tensor weights =
        ops::softmax_masked(ops::scale(ops::matmul_nt(q, k), inv_sqrt_c), mask);
    if (trace) trace->records.push_back({layer_index, u, u, true, 1.0, weights});
    Tensor acc = ops::matmul(weights, v);
    const auto& nbrs = ego.in_edges[u];
    if (use_neighbors && !nbrs.empty()) {
      Tensor pooled = h[nbrs.front().src];
      for (std::size_t i = 1; i < nbrs.size(); ++i) pooled = ops::add(pooled, h[nbrs[i].src]);
      acc = ops::add(acc, ops::scale(pooled, 1.0 / static_cast<double>(nbrs.size())));
    }
    out[u] = acc;
  }
  return out;
}

Tensor predict_head(const HeadParams& p, const Tensor& h_last, const Tensor& e) {
  const Tensor collapsed = ops::conv1d_causal(ops::add(h_last, e), p.kernel);  // [T x 1]
  const Tensor row = ops::reshape(collapsed, {1, collapsed.rows()});
  return ops::relu(ops::add_rowvec(ops::matmul(row, p.weight), p.bias));
}

}  // namespace gaia
