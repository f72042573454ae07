#include "gaia/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "gaia/errors.hpp"
#include "gaia/ops.hpp"
#include "gaia/rng.hpp"

namespace gaia {

using nlohmann::json;

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth,
                        double mape_floor) {
  if (pred.size() != truth.size()) {
    throw DimensionError("compute_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " truths");
  }
  Metrics m;
  m.count = pred.size();
  if (m.count == 0) return m;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - truth[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (std::abs(truth[i]) < mape_floor) {
      ++m.mape_excluded;
    } else {
      pct_sum += std::abs(err) / std::abs(truth[i]);
      ++pct_n;
    }
  }
  const double n = static_cast<double>(m.count);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = pct_n ? pct_sum / static_cast<double>(pct_n) : 0.0;
  return m;
}

std::string_view normalization_name(Normalization n) {
  return n == Normalization::Log1p ? "log1p" : "none";
}

Normalization parse_normalization(std::string_view name) {
  if (name == "log1p") return Normalization::Log1p;
  if (name == "none") return Normalization::None;
  throw ConfigError("unknown normalization '" + std::string(name) + "'");
}

double normalize(double x, Normalization n) {
  return n == Normalization::Log1p ? std::log1p(x) : x;
}

double denormalize(double y, Normalization n) {
  return n == Normalization::Log1p ? std::expm1(y) : y;
}

Normalizer fit_normalizer(const ESellerGraph& graph, const std::vector<std::string>& ids,
                          Normalization kind) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& id : ids) {
    for (double x : graph.node(graph.index_of(id)).gmv) {
      const double y = normalize(x, kind);
      sum += y;
      sq += y * y;
      ++n;
    }
  }
  Normalizer out{kind, 0.0, 1.0};
  if (n == 0) return out;
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
  // A flat training set keeps unit scale.
  out.scale = sd > 1e-12 ? sd : 1.0;
  out.center = mean - 2.0 * out.scale;
  return out;
}

void normalize_ego(EgoSubgraph& ego, const Normalizer& n) {
  for (std::size_t i = 0; i < ego.padded_gmv.size(); ++i)
    if (ego.valid_mask[i]) ego.padded_gmv[i] = n.forward(ego.padded_gmv[i]);
  for (double& v : ego.target) v = n.forward(v);
}

void TrainConfig::validate() const {
  if (channels == 0 || batch_size == 0 || layers == 0 || t_max == 0 || horizon == 0) {
    throw ConfigError("C, batch_size, L, T_max and T' must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
    throw ConfigError("Adam needs beta1, beta2 in [0, 1) and eps > 0");
  }
  if (max_neighbors == 0) throw ConfigError("max_neighbors must be >= 1");
  if (!std::isfinite(norm_center) || !(norm_scale > 0.0) || !std::isfinite(norm_scale)) {
    throw ConfigError("norm_center must be finite and norm_scale positive");
  }
  const double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split_ratios must sum to 1");
  model_config(0, 0).validate();
}

ModelConfig TrainConfig::model_config(std::size_t d_temporal, std::size_t d_static) const {
  ModelConfig mc;
  mc.t_max = t_max;
  mc.horizon = horizon;
  mc.channels = channels;
  mc.kernel_groups = kernel_groups;
  mc.layers = layers;
  mc.d_temporal = d_temporal;
  mc.d_static = d_static;
  mc.ablations = ablations;
  mc.share_cau = share_cau;
  mc.use_edge_type = use_edge_type;
  return mc;
}

json TrainConfig::to_json() const {
  return json{{"C", channels},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"epochs", epochs},
              {"K", kernel_groups},
              {"L", layers},
              {"T_max", t_max},
              {"horizon", horizon},
              {"seed", seed},
              {"ablation", ablations.names()},
              {"beta1", beta1},
              {"beta2", beta2},
              {"eps", eps},
              {"normalization", std::string(normalization_name(normalization))},
              {"norm_center", norm_center},
              {"norm_scale", norm_scale},
              {"fit_normalization", fit_normalization},
              {"early_stop_patience", early_stop_patience},
              {"hops", hops},
              {"max_neighbors", max_neighbors},
              {"split_ratios", split_ratios},
              {"new_shop_threshold", new_shop_threshold},
              {"share_cau", share_cau},
              {"use_edge_type", use_edge_type},
              {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "C") c.channels = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "K") c.kernel_groups = value.get<std::size_t>();
      else if (key == "L") c.layers = value.get<std::size_t>();
      else if (key == "T_max") c.t_max = value.get<std::size_t>();
      else if (key == "horizon") c.horizon = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "ablation") c.ablations = Ablations::parse(value.get<std::vector<std::string>>());
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "normalization") c.normalization = parse_normalization(value.get<std::string>());
      else if (key == "norm_center") c.norm_center = value.get<double>();
      else if (key == "norm_scale") c.norm_scale = value.get<double>();
      else if (key == "fit_normalization") c.fit_normalization = value.get<bool>();
      else if (key == "early_stop_patience") c.early_stop_patience = value.get<std::size_t>();
      else if (key == "hops") c.hops = value.get<std::size_t>();
      else if (key == "max_neighbors") c.max_neighbors = value.get<std::size_t>();
      else if (key == "split_ratios") c.split_ratios = value.get<std::array<double, 3>>();
      else if (key == "new_shop_threshold") c.new_shop_threshold = value.get<std::size_t>();
      else if (key == "share_cau") c.share_cau = value.get<bool>();
      else if (key == "use_edge_type") c.use_edge_type = value.get<bool>();
      else if (key == "threads") c.threads = value.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto data = p.data_mut();
    auto grad = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      data[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

void Adam::restore(std::size_t step, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw CheckpointError("optimizer state does not match parameter count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel()) {
      throw CheckpointError("optimizer moment size mismatch");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

EgoSubgraph inference_ego(const ESellerGraph& graph, std::size_t node, const TrainConfig& cfg) {
  EgoSubgraph ego = extract_ego(graph, node, cfg.ego_hops(), cfg.max_neighbors,
                                Rng::derive(cfg.seed, 0x6567ULL + node));
  normalize_ego(ego, cfg.normalizer());
  return ego;
}

std::vector<Sample> build_samples(const ESellerGraph& graph, const TargetMap& targets,
                                  const std::vector<std::string>& ids, const TrainConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const std::size_t node = graph.index_of(id);
    auto it = targets.find(id);
    if (it == targets.end()) throw NotFoundError("no target for node '" + id + "'");
    if (it->second.size() != cfg.horizon) {
      throw DataError("node '" + id + "': target has " + std::to_string(it->second.size()) +
                      " months, expected " + std::to_string(cfg.horizon));
    }
    Sample s;
    s.id = id;
    s.target_raw = it->second;
    s.is_new = graph.node(node).observed_len() < cfg.new_shop_threshold;
    s.ego = extract_ego(graph, node, cfg.ego_hops(), cfg.max_neighbors,
                        Rng::derive(cfg.seed, 0x6567ULL + node));
    s.ego.target = s.target_raw;
    normalize_ego(s.ego, cfg.normalizer());
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers, contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<std::vector<double>> predict_samples(const GaiaModel& model,
                                                 const std::vector<Sample>& samples,
                                                 const Normalizer& norm, std::size_t threads) {
  std::vector<std::vector<double>> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    NoGradGuard no_grad;
    const Tensor y = model.forward(samples[i].ego);
    auto& row = out[i];
    row.resize(y.numel());
    for (std::size_t k = 0; k < y.numel(); ++k) row[k] = norm.inverse(y[k]);
  });
  return out;
}

EvalReport score_forecasts(const std::vector<std::string>& ids,
                           const std::vector<std::vector<double>>& predictions,
                           const std::vector<std::vector<double>>& truths,
                           const std::vector<bool>& is_new) {
  if (ids.empty()) throw DataError("evaluation on an empty node set");
  const std::size_t n = ids.size();
  const std::size_t horizon = truths.front().size();
  EvalReport r;
  r.ids = ids;
  r.predictions = predictions;
  std::vector<double> ps, ts, ps_new, ts_new, ps_old, ts_old;
  std::vector<std::vector<double>> pm(horizon), tm(horizon);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0, t = 0.0;
    for (std::size_t k = 0; k < horizon; ++k) {
      p += predictions[i][k];
      t += truths[i][k];
      pm[k].push_back(predictions[i][k]);
      tm[k].push_back(truths[i][k]);
    }
    ps.push_back(p);
    ts.push_back(t);
    (is_new[i] ? ps_new : ps_old).push_back(p);
    (is_new[i] ? ts_new : ts_old).push_back(t);
  }
  r.total = compute_metrics(ps, ts);
  r.new_shops = compute_metrics(ps_new, ts_new);
  r.old_shops = compute_metrics(ps_old, ts_old);
  for (std::size_t k = 0; k < horizon; ++k) r.monthly.push_back(compute_metrics(pm[k], tm[k]));
  return r;
}

EvalReport evaluate(const GaiaModel& model, const std::vector<Sample>& samples,
                    const Normalizer& norm, std::size_t threads) {
  if (samples.empty()) throw DataError("evaluation on an empty node set");
  auto preds = predict_samples(model, samples, norm, threads);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> truths;
  std::vector<bool> is_new;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    truths.push_back(s.target_raw);
    is_new.push_back(s.is_new);
  }
  return score_forecasts(ids, preds, truths, is_new);
}

EvalReport evaluate(const Checkpoint& ckpt, const ESellerGraph& graph, const TargetMap& targets,
                    const std::vector<std::string>& ids) {
  const TrainConfig cfg = ckpt.config();
  const GaiaModel model = restore_model(ckpt);
  return evaluate(model, build_samples(graph, targets, ids, cfg), cfg.normalizer(), cfg.threads);
}

TrainResult train(const ESellerGraph& graph, const TargetMap& targets, const Splits& splits,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (splits.train.empty()) throw DataError("training split is empty");
  TrainConfig cfg = config;
  if (cfg.fit_normalization) {
    const Normalizer fitted = fit_normalizer(graph, splits.train, cfg.normalization);
    cfg.norm_center = fitted.center;
    cfg.norm_scale = fitted.scale;
  }
  if (graph.t_max() != cfg.t_max) {
    throw ConfigError("graph T_max " + std::to_string(graph.t_max()) +
                      " does not match config T_max " + std::to_string(cfg.t_max));
  }
  GaiaModel model(cfg.model_config(graph.d_temporal(), graph.d_static()),
                  Rng::derive(cfg.seed, 1));
  const auto train_set = build_samples(graph, targets, splits.train, cfg);
  const auto val_set = build_samples(graph, targets, splits.val, cfg);

  // Start the head at the mean normalized target so the final relu is live.
  {
    auto bias = model.params().head.bias.data_mut();
    for (std::size_t k = 0; k < bias.size(); ++k) {
      double mean = 0.0;
      for (const auto& s : train_set) mean += s.ego.target[k];
      bias[k] = mean / static_cast<double>(train_set.size());
    }
  }

  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  Adam adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
  Rng order_rng(Rng::derive(cfg.seed, 2));

  auto snapshot = [&](std::size_t epoch) {
    Checkpoint ck = make_checkpoint(model, cfg);
    ck.adam_step = adam.step_count();
    ck.adam_m = adam.first_moments();
    ck.adam_v = adam.second_moments();
    ck.epoch = epoch;
    ck.rng_state = order_rng.state();
    return ck;
  };

  TrainResult result;
  result.checkpoint = snapshot(0);
  double best_mae = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      Tape::current().clear();
      for (auto& p : params) p.zero_grad();
      std::vector<Tensor> preds;
      std::vector<double> truth;
      for (std::size_t i = b; i < e; ++i) {
        const auto& s = train_set[order[i]];
        preds.push_back(model.forward(s.ego));
        truth.insert(truth.end(), s.ego.target.begin(), s.ego.target.end());
      }
      const Tensor pred = ops::concat_rows(preds);
      const Tensor loss = ops::mse_loss(pred, Tensor(pred.shape(), std::move(truth)));
      ++global_step;
      if (!std::isfinite(loss.item())) {
        Tape::current().clear();
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(global_step));
      }
      loss_sum += loss.item() * static_cast<double>(e - b);
      backward(loss);
      adam.step();
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_set.empty()) row.val = evaluate(model, val_set, cfg.normalizer(), cfg.threads).total;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);

    if (val_set.empty()) {
      result.checkpoint = snapshot(epoch);
      result.best_epoch = epoch;
      continue;
    }
    if (row.val.mae < best_mae) {
      best_mae = row.val.mae;
      since_best = 0;
      result.checkpoint = snapshot(epoch);
      result.best_epoch = epoch;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

void write_epoch_log(const std::vector<EpochLog>& log, std::ostream& out, bool timing) {
  out << "epoch,train_loss,val_mae,val_rmse,val_mape,seconds\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val.mae << ',' << r.val.rmse << ','
        << r.val.mape << ',' << (timing ? r.seconds : 0.0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace gaia
