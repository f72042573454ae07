#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gaia/baselines.hpp"
#include "gaia/errors.hpp"
#include "gaia/selfcheck.hpp"
#include "gaia/synth.hpp"
#include "gaia/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gaia;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitNumeric = 5;

constexpr const char* kGraphFile = "graph.jsonl";
constexpr const char* kTruthFile = "truth.jsonl";

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string(what) + " not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gaia");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("GAIA_LOG")) {
    const std::string l = level;
    if (l == "error") spdlog::set_level(spdlog::level::err);
    else if (l == "info") spdlog::set_level(spdlog::level::info);
    else if (l == "debug") spdlog::set_level(spdlog::level::debug);
  }
}

struct Dataset {
  ESellerGraph graph{1, 0, 0};
  TargetMap targets;
};

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / kGraphFile)) throw DataError("graph not found: " + (dir / kGraphFile).string());
  Dataset d{load_graph(dir / kGraphFile), {}};
  if (fs::exists(dir / kTruthFile)) d.targets = read_targets(dir / kTruthFile);
  return d;
}

Splits dataset_splits(const Dataset& d, const TrainConfig& cfg) {
  return split(d.graph, cfg.split_ratios, cfg.seed, cfg.new_shop_threshold);
}

const std::vector<std::string>& pick_split(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

json metrics_json(const Metrics& m) {
  return json{{"mae", m.mae},
              {"rmse", m.rmse},
              {"mape", m.mape},
              {"count", m.count},
              {"mape_excluded", m.mape_excluded}};
}

json report_json(const EvalReport& r) {
  json j = metrics_json(r.total);
  j["monthly"] = json::array();
  for (const auto& m : r.monthly) j["monthly"].push_back(metrics_json(m));
  j["new_shops"] = metrics_json(r.new_shops);
  j["old_shops"] = metrics_json(r.old_shops);
  return j;
}

void print_row(const std::string& label, const Metrics& m) {
  std::cout << std::left << std::setw(16) << label << std::right << std::setw(14) << m.mae
            << std::setw(14) << m.rmse << std::setw(10) << m.mape << std::setw(8) << m.count
            << '\n';
}

EvalReport baseline_report(const std::string& name, const Dataset& d,
                           const std::vector<std::string>& ids, const TrainConfig& cfg) {
  std::vector<std::vector<double>> preds, truths;
  std::vector<bool> is_new;
  for (const auto& id : ids) {
    const auto& node = d.graph.node(d.graph.index_of(id));
    auto it = d.targets.find(id);
    if (it == d.targets.end()) throw NotFoundError("no target for node '" + id + "'");
    preds.push_back(run_baseline(name, node.gmv, cfg.horizon).values);
    truths.push_back(it->second);
    is_new.push_back(node.observed_len() < cfg.new_shop_threshold);
  }
  return score_forecasts(ids, preds, truths, is_new);
}

// ---------------------------------------------------------------------------

int cmd_generate(const fs::path& spec_path, const fs::path& out) {
  if (!fs::exists(spec_path)) throw ConfigError("spec not found: " + spec_path.string());
  const SynthSpec spec = SynthSpec::from_json(read_json_file(spec_path, "spec"));
  const SynthResult r = generate(spec);
  fs::create_directories(out);
  save_graph(r.graph, out / kGraphFile);
  {
    std::ofstream truth(out / kTruthFile);
    write_truth(spec, r, truth);
  }
  std::map<std::size_t, std::size_t> hist;
  for (const auto& n : r.graph.nodes()) ++hist[n.observed_len()];
  json h = json::object();
  for (const auto& [len, count] : hist) h[std::to_string(len)] = count;
  const json summary{{"nodes", r.graph.size()},
                     {"edges",
                      {{"supply", r.graph.edge_count(Relation::SupplyChain)},
                       {"owner", r.graph.edge_count(Relation::SameOwner)}}},
                     {"history_length_histogram", h},
                     {"clamp_events", r.clamp_events},
                     {"lag_fit_residual", r.lag_fit_residual}};
  std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
  spdlog::info("wrote {} nodes to {}", r.graph.size(), out.string());
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct TrainArgs {
  fs::path data, config, out, log;
  bool no_timing = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

int cmd_train(const TrainArgs& a) {
  json cj = read_json_file(a.config, "config");
  if (a.seed) cj["seed"] = *a.seed;
  if (a.threads) cj["threads"] = *a.threads;
  const TrainConfig cfg = TrainConfig::from_json(cj);
  const Dataset d = load_dataset(a.data);
  const Splits splits = dataset_splits(d, cfg);
  spdlog::info("train {} / val {} / test {}", splits.train.size(), splits.val.size(),
               splits.test.size());
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochLog& e) {
    spdlog::info("epoch {} loss {:.6g} val_mae {:.6g}", e.epoch, e.train_loss, e.val.mae);
  };
  const TrainResult result = train(d.graph, d.targets, splits, cfg, hooks);
  save_checkpoint(result.checkpoint, a.out);
  fs::path log = a.log.empty() ? fs::path(a.out).replace_extension(".csv") : a.log;
  std::ofstream log_out(log);
  write_epoch_log(result.log, log_out, !a.no_timing);
  std::cout << "best epoch " << result.best_epoch << (result.early_stopped ? " (early stop)" : "")
            << ", checkpoint " << a.out.string() << ", log " << log.string() << '\n';
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data, const std::string& split_name,
             bool as_json, bool baselines) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const TrainConfig cfg = ckpt.config();
  const Dataset d = load_dataset(data);
  const Splits splits = dataset_splits(d, cfg);
  const auto& ids = pick_split(splits, split_name);
  const EvalReport report = evaluate(ckpt, d.graph, d.targets, ids);
  std::map<std::string, EvalReport> extra;
  if (baselines) {
    for (const char* name : {"last_value", "seasonal_naive", "ar_ls"}) {
      extra.emplace(name, baseline_report(name, d, ids, cfg));
    }
  }
  if (as_json) {
    json j = report_json(report);
    j["split"] = split_name;
    if (baselines) {
      j["baselines"] = json::object();
      for (const auto& [name, r] : extra) j["baselines"][name] = report_json(r);
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << std::setprecision(6) << std::left << std::setw(16) << "subset" << std::right
            << std::setw(14) << "MAE" << std::setw(14) << "RMSE" << std::setw(10) << "MAPE"
            << std::setw(8) << "n" << '\n';
  print_row("total", report.total);
  for (std::size_t k = 0; k < report.monthly.size(); ++k) {
    print_row("month " + std::to_string(k + 1), report.monthly[k]);
  }
  print_row("new shops", report.new_shops);
  print_row("old shops", report.old_shops);
  for (const auto& [name, r] : extra) print_row(name, r.total);
  if (report.total.mape_excluded) {
    std::cout << report.total.mape_excluded << " node(s) excluded from MAPE (truth < "
              << kMapeFloor << ")\n";
  }
  return 0;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& data, const std::string& id) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const TrainConfig cfg = ckpt.config();
  const Dataset d = load_dataset(data);
  const std::size_t node = d.graph.index_of(id);
  const GaiaModel model = restore_model(ckpt);
  const EgoSubgraph ego = inference_ego(d.graph, node, cfg);
  NoGradGuard no_grad;
  const Tensor y = model.forward(ego);
  double total = 0.0;
  std::cout << std::setprecision(10);
  for (std::size_t k = 0; k < y.numel(); ++k) {
    const double v = cfg.normalizer().inverse(y[k]);
    total += v;
    std::cout << "month " << k + 1 << ' ' << v << '\n';
  }
  std::cout << "total " << total << '\n';
  return 0;
}

struct InspectArgs {
  fs::path ckpt, data, out;
  std::string edge;
  std::size_t layer = 1;
  bool intra = false;
  fs::path scatter;
};

void write_matrix(const Tensor& w, std::ostream& out) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) out << (j ? "," : "") << w.at(i, j);
    out << '\n';
  }
}

// Pearson correlation between the GMV windows of length kWindow ending at
// query time i and key time j, for every causal pair j <= i where both
// windows are fully observed and non-constant.
constexpr std::size_t kWindow = 3;

std::vector<std::tuple<std::size_t, std::size_t, double>> window_correlations(
    const EgoSubgraph& ego, std::size_t q, std::size_t k) {
  const std::size_t T = ego.t_max;
  auto window = [&](std::size_t node, std::size_t end, std::vector<double>& w) {
    w.clear();
    if (end + 1 < kWindow) return false;
    for (std::size_t t = end + 1 - kWindow; t <= end; ++t) {
      if (!ego.valid_mask[node * T + t]) return false;
      w.push_back(ego.padded_gmv[node * T + t]);
    }
    return true;
  };
  std::vector<std::tuple<std::size_t, std::size_t, double>> out;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < T; ++i) {
    if (!window(q, i, a)) continue;
    for (std::size_t j = 0; j <= i; ++j) {
      if (!window(k, j, b)) continue;
      double ma = 0, mb = 0;
      for (std::size_t t = 0; t < kWindow; ++t) ma += a[t] / kWindow, mb += b[t] / kWindow;
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t t = 0; t < kWindow; ++t) {
        sab += (a[t] - ma) * (b[t] - mb);
        saa += (a[t] - ma) * (a[t] - ma);
        sbb += (b[t] - mb) * (b[t] - mb);
      }
      if (saa <= 0 || sbb <= 0) continue;
      out.emplace_back(i, j, sab / std::sqrt(saa * sbb));
    }
  }
  return out;
}

int cmd_inspect(const InspectArgs& a) {
  const auto comma = a.edge.find(',');
  if (comma == std::string::npos) throw ConfigError("--edge expects src,dst");
  const std::string src = a.edge.substr(0, comma), dst = a.edge.substr(comma + 1);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  TrainConfig cfg = ckpt.config();
  if (a.layer < 1 || a.layer > cfg.layers) {
    throw ConfigError("--layer must be in 1.." + std::to_string(cfg.layers));
  }
  const Dataset d = load_dataset(a.data);
  const std::size_t s = d.graph.index_of(src), t = d.graph.index_of(dst);
  const auto& in = d.graph.in_neighbors(t);
  bool found = false;
  for (const auto& e : in) found = found || e.src == s;
  if (!found && !a.intra) throw NotFoundError("no edge " + src + " -> " + dst);
  // Widen the neighbor cap so the requested edge is never sampled away.
  cfg.max_neighbors = std::max(cfg.max_neighbors, in.size());
  const GaiaModel model = restore_model(ckpt);
  const EgoSubgraph ego = inference_ego(d.graph, t, cfg);
  AttentionTrace trace;
  {
    NoGradGuard no_grad;
    model.forward(ego, &trace);
  }
  const std::size_t key = a.intra ? 0 : *ego.local_index(src);
  const AttentionRecord* rec = trace.find(a.layer - 1, 0, key, a.intra);
  if (!rec) throw NotFoundError("no attention recorded for that edge and layer");
  std::ofstream out(a.out);
  write_matrix(rec->weights, out);
  if (!a.scatter.empty()) {
    std::ofstream sc(a.scatter);
    sc << std::setprecision(17) << "i,j,correlation,attention\n";
    for (const auto& [i, j, corr] : window_correlations(ego, 0, key)) {
      sc << i << ',' << j << ',' << corr << ',' << rec->weights.at(i, j) << '\n';
    }
  }
  std::cout << "alpha " << rec->alpha << ", wrote " << a.out.string() << '\n';
  return 0;
}

int cmd_selfcheck() {
  int failures = 0;
  std::vector<std::pair<std::string, Ablations>> variants{{"full", {}}};
  for (const char* name : {"no_ita", "no_ffl", "no_tel", "no_graph"}) {
    variants.emplace_back(name, Ablations::parse({name}));
  }
  for (const auto& [label, ab] : variants) {
    const GradCheckReport r = model_gradcheck(7, ab);
    std::cout << (r.pass ? "ok   " : "FAIL ") << std::left << std::setw(10) << label
              << " max rel error " << r.max_rel_error << ", skipped " << r.skipped << '\n';
    for (const auto& p : r.params) {
      if (!p.pass) std::cout << "     " << p.name << " " << p.max_rel_error << '\n';
    }
    failures += r.pass ? 0 : 1;
  }
  return failures ? kExitNumeric : 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Seller GMV forecasting with temporal graph attention"};
  app.require_subcommand(1);

  fs::path spec, out;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic seller universe");
  gen->add_option("--spec", spec, "Synthetic spec JSON")->required();
  gen->add_option("--out", out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--config", ta.config, "Training config JSON")->required();
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--log", ta.log, "Epoch CSV (default: checkpoint path with .csv)");
  tr->add_flag("--no-timing", ta.no_timing, "Write zeros in the timing column");
  tr->add_option("--seed", ta.seed, "Override the config seed");
  tr->add_option("--threads", ta.threads, "Evaluation worker threads");

  fs::path ckpt, data;
  std::string split_name = "test";
  bool as_json = false, baselines = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--split", split_name, "train, val or test");
  ev->add_flag("--json", as_json, "Machine-readable output");
  ev->add_flag("--baselines", baselines, "Also score the naive and AR baselines");

  std::string node;
  auto* pr = app.add_subcommand("predict", "Forecast one node");
  pr->add_option("--ckpt", ckpt)->required();
  pr->add_option("--data", data)->required();
  pr->add_option("--node", node)->required();

  InspectArgs ia;
  auto* in = app.add_subcommand("inspect-attention", "Dump a CAU attention matrix as CSV");
  in->add_option("--ckpt", ia.ckpt)->required();
  in->add_option("--data", ia.data)->required();
  in->add_option("--edge", ia.edge, "src,dst (dst is the center node)")->required();
  in->add_option("--layer", ia.layer, "Layer, 1-based");
  in->add_option("--out", ia.out)->required();
  in->add_flag("--intra", ia.intra, "Dump the intra (self) attention of dst instead");
  in->add_option("--scatter", ia.scatter, "Also write (correlation, attention) pairs");

  auto* sc = app.add_subcommand("selfcheck", "Finite-difference gradient check of the model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(spec, out);
    if (*tr) return cmd_train(ta);
    if (*ev) return cmd_eval(ckpt, data, split_name, as_json, baselines);
    if (*pr) return cmd_predict(ckpt, data, node);
    if (*in) return cmd_inspect(ia);
    if (*sc) return cmd_selfcheck();
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const NotFoundError& e) {
    std::cerr << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
