#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gaia/model.hpp"

namespace gaia {

struct TrainConfig;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Everything needed to resume training or reproduce forward passes exactly.
//
// On-disk layout (little-endian):
//   "GAIA" | u32 version | u32 entry count
//   entries: u32 name length | name bytes | u32 ndim | u64 dims[ndim] | f64 payload
//   u64 config length | UTF-8 JSON
// Model parameters use their canonical names; optimizer moments are stored
// as "adam.m/<name>" and "adam.v/<name>".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json train_config;  // TrainConfig::to_json()
  ModelConfig model_config;
  std::vector<NamedTensor> params;
  std::size_t adam_step = 0;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::size_t epoch = 0;
  std::string rng_state;

  TrainConfig config() const;
};

Checkpoint make_checkpoint(const GaiaModel& model, const TrainConfig& cfg);
// Rebuilds a model and copies every parameter from the checkpoint.
GaiaModel restore_model(const Checkpoint& ckpt);

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws CheckpointError on a missing file, bad magic or truncated data.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace gaia
