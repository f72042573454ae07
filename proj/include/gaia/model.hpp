#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaia/encoder.hpp"
#include "gaia/graph.hpp"
#include "gaia/ita_gcn.hpp"

namespace gaia {

struct Ablations {
  bool no_ita = false;
  bool no_ffl = false;
  bool no_tel = false;
  // Neighbor aggregation disabled; each node sees only its own history.
  bool no_graph = false;

  // Accepts "no_ita", "no_ffl", "no_tel", "no_graph"; throws ConfigError
  // on anything else.
  static Ablations parse(const std::vector<std::string>& names);
  std::vector<std::string> names() const;
  bool any() const { return no_ita || no_ffl || no_tel || no_graph; }
};

struct ModelConfig {
  std::size_t t_max = 24;
  std::size_t horizon = 3;
  std::size_t channels = 32;
  std::size_t kernel_groups = 4;
  std::size_t layers = 2;
  std::size_t d_temporal = 0;
  std::size_t d_static = 0;
  Ablations ablations;
  bool share_cau = false;
  bool use_edge_type = true;

  // Width of the single TEL kernel pair used when no_tel is set.
  static constexpr std::size_t kSingleTelWidth = 4;

  void validate() const;
};

struct GaiaParams {
  std::optional<FFLParams> ffl;
  std::optional<RawProjectionParams> raw;
  TELParams tel;
  std::vector<LayerParams> layers;
  std::vector<SelfAttentionParams> self_attention;
  HeadParams head;

  // Every learnable tensor under its canonical name, in a stable order.
  std::vector<std::pair<std::string, Tensor>> named() const;
};

class GaiaModel {
 public:
  GaiaModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  GaiaParams& params() { return params_; }
  const GaiaParams& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const { return params_.named(); }
  std::size_t parameter_count() const;

  // Temporal representation E for one local node of an ego subgraph whose
  // GMV inputs are already normalized.
  Tensor encode(const EgoSubgraph& ego, std::size_t local) const;

  // Normalized [1 x T'] forecast for the ego center.
  Tensor forward(const EgoSubgraph& ego, AttentionTrace* trace = nullptr) const;

 private:
  ModelConfig config_;
  GaiaParams params_;
};

}  // namespace gaia
