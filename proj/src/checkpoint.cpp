#include "gaia/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "gaia/errors.hpp"
#include "gaia/train.hpp"

namespace gaia {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'G', 'A', 'I', 'A'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  return v;
}

void put_entry(std::ostream& out, const std::string& name, const Shape& shape,
               const std::vector<double>& data) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

}  // namespace

json model_config_to_json(const ModelConfig& mc) {
  return json{{"T_max", mc.t_max},           {"horizon", mc.horizon},
              {"C", mc.channels},            {"K", mc.kernel_groups},
              {"L", mc.layers},              {"d_temporal", mc.d_temporal},
              {"d_static", mc.d_static},     {"ablation", mc.ablations.names()},
              {"share_cau", mc.share_cau},   {"use_edge_type", mc.use_edge_type}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig mc;
    mc.t_max = j.at("T_max").get<std::size_t>();
    mc.horizon = j.at("horizon").get<std::size_t>();
    mc.channels = j.at("C").get<std::size_t>();
    mc.kernel_groups = j.at("K").get<std::size_t>();
    mc.layers = j.at("L").get<std::size_t>();
    mc.d_temporal = j.at("d_temporal").get<std::size_t>();
    mc.d_static = j.at("d_static").get<std::size_t>();
    mc.ablations = Ablations::parse(j.at("ablation").get<std::vector<std::string>>());
    mc.share_cau = j.at("share_cau").get<bool>();
    mc.use_edge_type = j.at("use_edge_type").get<bool>();
    return mc;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad model config in checkpoint: ") + e.what());
  }
}

TrainConfig Checkpoint::config() const {
  try {
    return TrainConfig::from_json(train_config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad training config in checkpoint: ") + e.what());
  }
}

Checkpoint make_checkpoint(const GaiaModel& model, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.train_config = cfg.to_json();
  ck.model_config = model.config();
  for (const auto& [name, t] : model.named_parameters()) {
    auto d = t.data();
    ck.params.push_back({name, t.shape(), std::vector<double>(d.begin(), d.end())});
  }
  return ck;
}

GaiaModel restore_model(const Checkpoint& ckpt) {
  GaiaModel model(ckpt.model_config, 0);
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& p : ckpt.params) by_name[p.name] = &p;
  const auto named = model.named_parameters();
  if (named.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " tensors, model expects " + std::to_string(named.size()));
  }
  for (const auto& [name, t] : named) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(it->second->shape) +
                            ", expected " + shape_str(t.shape()));
    }
    auto dst = Tensor(t).data_mut();
    std::copy(it->second->data.begin(), it->second->data.end(), dst.begin());
  }
  return model;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const std::size_t n_adam = ckpt.adam_m.size();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size() + 2 * n_adam));
  for (const auto& p : ckpt.params) put_entry(out, p.name, p.shape, p.data);
  for (std::size_t i = 0; i < n_adam; ++i) {
    const auto& p = ckpt.params.at(i);
    put_entry(out, "adam.m/" + p.name, p.shape, ckpt.adam_m[i]);
    put_entry(out, "adam.v/" + p.name, p.shape, ckpt.adam_v[i]);
  }
  json meta{{"train_config", ckpt.train_config},
            {"model_config", model_config_to_json(ckpt.model_config)},
            {"adam_step", ckpt.adam_step},
            {"epoch", ckpt.epoch},
            {"rng_state", ckpt.rng_state}};
  const std::string text = meta.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, "entry count");
  Checkpoint ck;
  std::unordered_map<std::string, std::vector<double>> moments;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    if (name_len > 4096) throw CheckpointError("corrupt checkpoint: name length " + std::to_string(name_len));
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("truncated checkpoint while reading name");
    const auto ndim = get<std::uint32_t>(in, "rank");
    if (ndim > 8) throw CheckpointError("corrupt checkpoint: rank " + std::to_string(ndim));
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(get<std::uint64_t>(in, "shape"));
      numel *= shape.back();
    }
    if (numel > (std::size_t{1} << 32)) throw CheckpointError("corrupt checkpoint: tensor too large");
    std::vector<double> data(numel);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(numel * sizeof(double)))) {
      throw CheckpointError("truncated checkpoint while reading '" + name + "'");
    }
    if (name.rfind("adam.", 0) == 0) {
      moments[name] = std::move(data);
    } else {
      ck.params.push_back({std::move(name), std::move(shape), std::move(data)});
    }
  }
  const auto len = get<std::uint64_t>(in, "config length");
  if (len > (std::uint64_t{1} << 30)) throw CheckpointError("corrupt checkpoint: config length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError("truncated checkpoint while reading config");
  }
  try {
    const json meta = json::parse(text);
    ck.train_config = meta.at("train_config");
    ck.model_config = model_config_from_json(meta.at("model_config"));
    ck.adam_step = meta.at("adam_step").get<std::size_t>();
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.rng_state = meta.at("rng_state").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  if (!moments.empty()) {
    for (const auto& p : ck.params) {
      auto m = moments.find("adam.m/" + p.name);
      auto v = moments.find("adam.v/" + p.name);
      if (m == moments.end() || v == moments.end()) {
        throw CheckpointError("checkpoint is missing optimizer state for '" + p.name + "'");
      }
      ck.adam_m.push_back(std::move(m->second));
      ck.adam_v.push_back(std::move(v->second));
    }
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  return read_checkpoint(in);
}

}  // namespace gaia
