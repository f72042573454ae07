#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gaia/graph.hpp"

namespace gaia {

// Future GMV per node id, raw currency units, one value per forecast month.
using TargetMap = std::unordered_map<std::string, std::vector<double>>;

// Generative configuration for a synthetic seller universe.
struct SynthSpec {
  std::size_t n_sellers = 2000;
  std::size_t t_max = 24;
  std::size_t horizon = 3;
  // Chance that a new node is a supplier of an earlier retailer.
  double supply_edge_prob = 0.4;
  // Chance that a new retailer shares an owner (and trend) with an earlier one.
  double owner_edge_prob = 0.15;
  // Suppliers move this many months before their retailer.
  std::size_t lead_lag_months = 2;
  std::size_t season_period = 12;
  double season_amplitude = 0.3;
  std::array<double, 2> trend_slope_range{-0.01, 0.03};
  // Noise standard deviation as a fraction of the node's base level.
  double noise_sigma = 0.05;
  // Weights over observed_len = 3..t_max. Empty means: new_shop_fraction of
  // the mass spread uniformly below new_shop_threshold, the rest above.
  std::vector<double> deficiency_dist;
  double new_shop_fraction = 0.4;
  std::size_t new_shop_threshold = 10;
  // Base levels are drawn log-uniformly from this range.
  std::array<double, 2> base_gmv_range{2000.0, 50000.0};
  std::size_t n_industries = 4;
  std::size_t n_regions = 4;
  std::size_t start_month = 0;
  std::uint64_t seed = 0;

  static constexpr std::size_t kMinObserved = 3;

  // Throws ConfigError when the spec cannot be realized.
  void validate() const;
  std::vector<double> history_weights() const;

  static SynthSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

enum class SellerRole { Retailer, Supplier };

struct NodeTruth {
  std::string id;
  SellerRole role = SellerRole::Retailer;
  std::string retailer;  // the node a supplier leads, empty for retailers
  std::size_t observed_len = 0;
  double base = 0.0;
  double season_phase = 0.0;
  double trend = 0.0;
  std::size_t industry = 0;
  std::size_t region = 0;
  std::vector<double> target;
};

struct SynthResult {
  ESellerGraph graph{1, 0, 0};
  TargetMap targets;
  std::vector<NodeTruth> truth;
  // Full noisy series per node over t_max + horizon months, before
  // truncation, aligned with graph node order.
  std::vector<std::vector<double>> series;
  // Noise-free series per node, same layout.
  std::vector<std::vector<double>> clean;
  std::size_t clamp_events = 0;
  // Largest residual of the scalar fit supplier(t) ~ c * retailer(t + lag)
  // over all supplier edges, on the clean series.
  double lag_fit_residual = 0.0;
};

SynthResult generate(const SynthSpec& spec);

// Per-month temporal features for observed months [t_max - len, t_max):
// a month-of-year one-hot followed by log customer and order counts.
// Reads only the observed months of `series`.
std::vector<double> synth_temporal_features(const SynthSpec& spec, std::size_t node_index,
                                            const std::vector<double>& series,
                                            std::size_t observed_len);

inline constexpr std::size_t kSynthTemporalDims = 14;

void write_truth(const SynthSpec& spec, const SynthResult& result, std::ostream& out);
// Reads targets from a truth sidecar written by write_truth.
TargetMap read_targets(const std::filesystem::path& path);

struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Seeded split, stratified by history length (new: observed_len <
// new_shop_threshold). Overall sizes follow largest-remainder rounding of
// ratios; each stratum lands within one node of its share.
Splits split(const ESellerGraph& graph, std::array<double, 3> ratios, std::uint64_t seed,
             std::size_t new_shop_threshold = 10);

}  // namespace gaia
