#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaia/checkpoint.hpp"
#include "gaia/graph.hpp"
#include "gaia/model.hpp"
#include "gaia/synth.hpp"

namespace gaia {

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  std::size_t count = 0;
  // Cells excluded from MAPE because the truth is below the floor.
  std::size_t mape_excluded = 0;
};

inline constexpr double kMapeFloor = 1.0;

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth,
                        double mape_floor = kMapeFloor);

// ---------------------------------------------------------------------------
// Normalization of GMV magnitudes

enum class Normalization { Log1p, None };

std::string_view normalization_name(Normalization n);
Normalization parse_normalization(std::string_view name);
double normalize(double x, Normalization n);
double denormalize(double y, Normalization n);

// Dataset-level GMV map y = (f(x) - center) / scale, with f = log1p or the
// identity. The defaults leave f alone.
struct Normalizer {
  Normalization kind = Normalization::Log1p;
  double center = 0.0;
  double scale = 1.0;

  double forward(double x) const { return (normalize(x, kind) - center) / scale; }
  double inverse(double y) const { return denormalize(y * scale + center, kind); }
};

// Mean minus two standard deviations of f over every observed month of the
// given nodes, and that standard deviation: typical inputs land in [0, 4] and
// targets stay above the head's ReLU floor.
Normalizer fit_normalizer(const ESellerGraph& graph, const std::vector<std::string>& ids,
                          Normalization kind);

// Maps observed GMV cells and the target in place; padded cells stay 0.
void normalize_ego(EgoSubgraph& ego, const Normalizer& n);

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  std::size_t channels = 32;
  std::size_t batch_size = 32;
  double learning_rate = 1e-5;
  std::size_t epochs = 100;
  std::size_t kernel_groups = 4;
  std::size_t layers = 2;
  std::size_t t_max = 24;
  std::size_t horizon = 3;
  std::uint64_t seed = 0;
  Ablations ablations;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Normalization normalization = Normalization::Log1p;
  // Affine part of the GMV map. train() refits both on the training split
  // when fit_normalization is set and stores the result in the checkpoint.
  double norm_center = 0.0;
  double norm_scale = 1.0;
  bool fit_normalization = true;
  std::size_t early_stop_patience = 10;
  // Ego extraction depth; 0 means "same as layers".
  std::size_t hops = 0;
  std::size_t max_neighbors = 10;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::size_t new_shop_threshold = 10;
  bool share_cau = false;
  bool use_edge_type = true;
  // Worker threads for evaluation; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
  std::size_t ego_hops() const { return hops ? hops : layers; }
  ModelConfig model_config(std::size_t d_temporal, std::size_t d_static) const;
  Normalizer normalizer() const { return {normalization, norm_center, norm_scale}; }

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps);

  // One bias-corrected update from the current grad buffers (missing
  // buffers count as zero).
  void step();

  std::size_t step_count() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::size_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// ---------------------------------------------------------------------------
// Samples, training and evaluation

struct Sample {
  std::string id;
  EgoSubgraph ego;  // normalized inputs; ego.target is the normalized target
  std::vector<double> target_raw;
  bool is_new = false;
};

std::vector<Sample> build_samples(const ESellerGraph& graph, const TargetMap& targets,
                                  const std::vector<std::string>& ids, const TrainConfig& cfg);
// Ego for inference on one node (no target needed).
EgoSubgraph inference_ego(const ESellerGraph& graph, std::size_t node, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  Metrics val;
  double seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

TrainResult train(const ESellerGraph& graph, const TargetMap& targets, const Splits& splits,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

struct EvalReport {
  // On the forecast summed over the horizon, original units.
  Metrics total;
  // Per forecast month, original units.
  std::vector<Metrics> monthly;
  Metrics new_shops;
  Metrics old_shops;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> predictions;  // per node, per month, original units
};

// Forecasts in original units for every sample, run over `threads` workers.
std::vector<std::vector<double>> predict_samples(const GaiaModel& model,
                                                 const std::vector<Sample>& samples,
                                                 const Normalizer& norm,
                                                 std::size_t threads = 1);

EvalReport evaluate(const GaiaModel& model, const std::vector<Sample>& samples,
                    const Normalizer& norm, std::size_t threads = 1);
EvalReport evaluate(const Checkpoint& ckpt, const ESellerGraph& graph, const TargetMap& targets,
                    const std::vector<std::string>& ids);

// Summary metrics for arbitrary per-node forecasts (baselines use this).
EvalReport score_forecasts(const std::vector<std::string>& ids,
                           const std::vector<std::vector<double>>& predictions,
                           const std::vector<std::vector<double>>& truths,
                           const std::vector<bool>& is_new);

// CSV: epoch,train_loss,val_mae,val_rmse,val_mape,seconds
void write_epoch_log(const std::vector<EpochLog>& log, std::ostream& out, bool timing = true);

}  // namespace gaia
