#include "gaia/model.hpp"

#include "gaia/errors.hpp"

namespace gaia {

Ablations Ablations::parse(const std::vector<std::string>& names) {
  Ablations a;
  for (const auto& n : names) {
    if (n == "no_ita") a.no_ita = true;
    else if (n == "no_ffl") a.no_ffl = true;
    else if (n == "no_tel") a.no_tel = true;
    else if (n == "no_graph") a.no_graph = true;
    else throw ConfigError("unknown ablation '" + n + "'");
  }
  return a;
}

std::vector<std::string> Ablations::names() const {
  std::vector<std::string> out;
  if (no_ita) out.emplace_back("no_ita");
  if (no_ffl) out.emplace_back("no_ffl");
  if (no_tel) out.emplace_back("no_tel");
  if (no_graph) out.emplace_back("no_graph");
  return out;
}

void ModelConfig::validate() const {
  if (t_max == 0 || horizon == 0 || channels == 0 || layers == 0) {
    throw ConfigError("T_max, T', C and L must be positive");
  }
  if (!ablations.no_tel) {
    if (kernel_groups == 0 || channels % kernel_groups != 0) {
      throw ConfigError("C must be divisible by K (C=" + std::to_string(channels) +
                        ", K=" + std::to_string(kernel_groups) + ")");
    }
    if ((std::size_t{1} << kernel_groups) > t_max) {
      throw ConfigError("largest TEL kernel 2^K exceeds T_max");
    }
  }
}

GaiaModel::GaiaModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  if (c.ablations.no_ffl) {
    params_.raw = init_raw_projection(c.channels, c.d_temporal, c.d_static, rng);
  } else {
    params_.ffl = init_ffl(c.t_max, c.channels, c.d_temporal, c.d_static, rng);
  }
  params_.tel = c.ablations.no_tel ? init_tel_single(c.channels, ModelConfig::kSingleTelWidth, rng)
                                   : init_tel(c.channels, c.kernel_groups, rng);
  for (std::size_t l = 0; l < c.layers; ++l) {
    if (c.ablations.no_ita) {
      params_.self_attention.push_back(init_self_attention(c.channels, rng));
    } else {
      LayerParams lp = init_layer(c.t_max, c.channels, rng);
      params_.layers.push_back(std::move(lp));
    }
  }
  params_.head = init_head(c.t_max, c.horizon, c.channels, rng);
}

std::vector<std::pair<std::string, Tensor>> GaiaParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (ffl) {
    out.emplace_back("ffl.w_I", ffl->w_I);
    out.emplace_back("ffl.b_I", ffl->b_I);
    out.emplace_back("ffl.W_T", ffl->W_T);
    out.emplace_back("ffl.b_T", ffl->b_T);
    out.emplace_back("ffl.W_S", ffl->W_S);
    out.emplace_back("ffl.b_S", ffl->b_S);
    out.emplace_back("ffl.W_F", ffl->W_F);
    out.emplace_back("ffl.b_F", ffl->b_F);
  }
  if (raw) {
    out.emplace_back("raw.W", raw->W);
    out.emplace_back("raw.b", raw->b);
  }
  for (std::size_t k = 0; k < tel.capture.size(); ++k)
    out.emplace_back("tel.capture." + std::to_string(k + 1), tel.capture[k]);
  for (std::size_t k = 0; k < tel.denoise.size(); ++k)
    out.emplace_back("tel.denoise." + std::to_string(k + 1), tel.denoise[k]);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    const auto& lp = layers[l];
    out.emplace_back(pre + "inter.L_Q", lp.inter.query);
    out.emplace_back(pre + "inter.L_K", lp.inter.key);
    out.emplace_back(pre + "inter.L_V", lp.inter.value);
    out.emplace_back(pre + "intra.L_Q", lp.intra.query);
    out.emplace_back(pre + "intra.L_K", lp.intra.key);
    out.emplace_back(pre + "intra.L_V", lp.intra.value);
    out.emplace_back(pre + "mu", lp.mu);
    out.emplace_back(pre + "L_s", lp.src_kernel);
    out.emplace_back(pre + "L_d", lp.dst_kernel);
    out.emplace_back(pre + "edge_rel", lp.edge_rel_weight);
  }
  for (std::size_t l = 0; l < self_attention.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".sa.";
    out.emplace_back(pre + "W_Q", self_attention[l].W_Q);
    out.emplace_back(pre + "W_K", self_attention[l].W_K);
    out.emplace_back(pre + "W_V", self_attention[l].W_V);
  }
  out.emplace_back("head.L_P", head.kernel);
  out.emplace_back("head.W_P", head.weight);
  out.emplace_back("head.b_P", head.bias);
  return out;
}

std::size_t GaiaModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_.named()) {
    // The intra CAU is unused when shared with the inter CAU.
    if (config_.share_cau && name.find(".intra.") != std::string::npos) continue;
    n += t.numel();
  }
  return n;
}

Tensor GaiaModel::encode(const EgoSubgraph& ego, std::size_t local) const {
  const std::size_t t = ego.t_max;
  const std::size_t dt = ego.d_temporal;
  const std::size_t ds = ego.d_static;
  if (t != config_.t_max) {
    throw DimensionError("ego T_max " + std::to_string(t) + " does not match model T_max " +
                         std::to_string(config_.t_max));
  }
  Tensor gmv({t, 1}, std::vector<double>(ego.padded_gmv.begin() + local * t,
                                         ego.padded_gmv.begin() + (local + 1) * t));
  Tensor tf({t, dt}, std::vector<double>(ego.padded_temporal.begin() + local * t * dt,
                                         ego.padded_temporal.begin() + (local + 1) * t * dt));
  Tensor sf({1, ds}, std::vector<double>(ego.static_feats.begin() + local * ds,
                                         ego.static_feats.begin() + (local + 1) * ds));
  const Tensor s = params_.ffl ? ffl_forward(*params_.ffl, gmv, tf, sf)
                               : raw_projection_forward(*params_.raw, gmv, tf, sf);
  return tel_forward(params_.tel, s);
}

Tensor GaiaModel::forward(const EgoSubgraph& ego, AttentionTrace* trace) const {
  const std::size_t n = ego.size();
  const std::size_t depth = config_.layers;
  std::vector<Tensor> e(n);
  for (std::size_t u = 0; u < n; ++u)
    if (ego.hop[u] <= depth) e[u] = encode(ego, u);

  LayerOptions options;
  options.use_neighbors = !config_.ablations.no_graph;
  options.share_cau = config_.share_cau;
  options.use_edge_type = config_.use_edge_type;

  std::vector<Tensor> h = e;
  std::vector<bool> active(n);
  for (std::size_t l = 0; l < depth; ++l) {
    // After layer l only nodes within depth-1-l hops still feed the center.
    for (std::size_t u = 0; u < n; ++u) active[u] = ego.hop[u] + l + 1 <= depth;
    h = config_.ablations.no_ita
            ? self_attention_layer(params_.self_attention[l], ego, h, options.use_neighbors,
                                   &active, trace, l)
            : ita_gcn_layer(params_.layers[l], ego, h, options, &active, trace, l);
  }
  return predict_head(params_.head, h[ego.center], e[ego.center]);
}

}  // namespace gaia
