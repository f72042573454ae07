#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gaia/baselines.hpp"
#include "gaia/checkpoint.hpp"
#include "gaia/errors.hpp"
#include "gaia/ops.hpp"
#include "gaia/train.hpp"
#include "support.hpp"

using namespace gaia;
using namespace testing_support;

namespace {

struct Universe {
  SynthSpec spec;
  SynthResult data;
  Splits splits;
};

Universe tiny_universe(std::size_t n, std::uint64_t seed, std::array<double, 3> ratios) {
  Universe u;
  u.spec.n_sellers = n;
  u.spec.t_max = 12;
  u.spec.seed = seed;
  u.data = generate(u.spec);
  u.splits = split(u.data.graph, ratios, seed);
  return u;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.channels = 4;
  c.kernel_groups = 2;
  c.t_max = 12;
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  c.epochs = 3;
  c.seed = 3;
  return c;
}

std::string serialize(const Checkpoint& ck) {
  std::ostringstream out;
  write_checkpoint(ck, out);
  return out.str();
}

}  // namespace

TEST_CASE("metrics examples") {
  const std::vector<double> truth{100, 200};
  Metrics m = compute_metrics(truth, truth);
  CHECK(m.mae == 0.0);
  CHECK(m.rmse == 0.0);
  CHECK(m.mape == 0.0);

  m = compute_metrics(std::vector<double>{110, 180}, truth);
  CHECK(m.mae == doctest::Approx(15.0));
  CHECK(m.rmse == doctest::Approx(std::sqrt(250.0)));
  CHECK(m.mape == doctest::Approx(0.1));

  m = compute_metrics(std::vector<double>{5, 110}, std::vector<double>{0.5, 100});
  CHECK(m.mape_excluded == 1);
  CHECK(m.mape == doctest::Approx(0.1));
  CHECK(m.count == 2);

  CHECK_THROWS_AS(compute_metrics(std::vector<double>{1}, truth), DimensionError);
}

TEST_CASE("metrics match the loop reference") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    ref::Vec p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform(0, 1000);
      t[i] = rng.below(5) == 0 ? rng.uniform(0, 1) : rng.uniform(0, 1000);
    }
    const ref::Metrics want = ref::metrics(p, t);
    const Metrics got = compute_metrics(p, t);
    CHECK(std::abs(got.mae - want.mae) < 1e-9);
    CHECK(std::abs(got.rmse - want.rmse) < 1e-9);
    CHECK(std::abs(got.mape - want.mape) < 1e-9);
    CHECK(got.mape_excluded == want.excluded);
  }
}

TEST_CASE("property: normalization round trips") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = std::exp(rng.uniform(-5, 14));
    CHECK(denormalize(normalize(x, Normalization::Log1p), Normalization::Log1p) ==
          doctest::Approx(x).epsilon(1e-12));
    CHECK(denormalize(normalize(x, Normalization::None), Normalization::None) == x);
  }
  CHECK(normalize(0.0, Normalization::Log1p) == 0.0);
  CHECK(parse_normalization("log1p") == Normalization::Log1p);
  CHECK_THROWS_AS(parse_normalization("zscore"), ConfigError);
}

TEST_CASE("property: affine normalizer round trips") {
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const Normalizer n{rng.below(2) ? Normalization::Log1p : Normalization::None,
                       rng.uniform(-5, 10), rng.uniform(0.1, 3)};
    const double x = std::exp(rng.uniform(-3, 12));
    CHECK(n.inverse(n.forward(x)) == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("fitted normalizer centers training GMV two deviations above zero") {
  const Universe u = tiny_universe(60, 11, {0.6, 0.2, 0.2});
  const Normalizer n = fit_normalizer(u.data.graph, u.splits.train, Normalization::Log1p);
  double sum = 0.0, sq = 0.0, cells = 0.0;
  for (const auto& id : u.splits.train)
    for (double x : u.data.graph.node(u.data.graph.index_of(id)).gmv) {
      const double y = n.forward(x);
      sum += y;
      sq += y * y;
      ++cells;
    }
  const double mean = sum / cells;
  CHECK(mean == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sq / cells - mean * mean == doctest::Approx(1.0).epsilon(1e-9));

  // Padded months stay at zero; observed ones are mapped.
  TrainConfig cfg = tiny_config();
  cfg.norm_center = n.center;
  cfg.norm_scale = n.scale;
  for (const auto& s : build_samples(u.data.graph, u.data.targets, u.splits.train, cfg)) {
    for (std::size_t t = 0; t < cfg.t_max; ++t) {
      const double raw_or_pad = s.ego.valid_mask[t] ? n.forward(u.data.graph.node(s.ego.nodes[0]).gmv[t - (cfg.t_max - u.data.graph.node(s.ego.nodes[0]).observed_len())]) : 0.0;
      CHECK(s.ego.padded_gmv[t] == raw_or_pad);
    }
  }
}

TEST_CASE("training stores the fitted normalizer") {
  const Universe u = tiny_universe(20, 12, {0.6, 0.2, 0.2});
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainConfig stored = train(u.data.graph, u.data.targets, u.splits, cfg).checkpoint.config();
  const Normalizer want = fit_normalizer(u.data.graph, u.splits.train, Normalization::Log1p);
  CHECK(stored.norm_center == want.center);
  CHECK(stored.norm_scale == want.scale);

  cfg.fit_normalization = false;
  cfg.norm_center = 1.5;
  const TrainConfig kept = train(u.data.graph, u.data.targets, u.splits, cfg).checkpoint.config();
  CHECK(kept.norm_center == 1.5);
  CHECK(kept.norm_scale == 1.0);
}

TEST_CASE("adam matches the loop reference") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    Tensor w = random_tensor({n}, rng);
    w.set_requires_grad(true);
    const double lr = rng.uniform(1e-4, 1e-1);
    Adam adam({w}, lr, 0.9, 0.999, 1e-8);
    ref::Vec rw = to_vec(w), m(n, 0.0), v(n, 0.0);
    for (std::size_t step = 1; step <= 5; ++step) {
      w.zero_grad();
      const ref::Vec g = to_vec(random_tensor({n}, rng));
      for (std::size_t i = 0; i < n; ++i) w.grad_buffer()[i] = g[i];
      adam.step();
      ref::adam_step(rw, m, v, g, step, lr);
    }
    CHECK(max_abs_diff(rw, w) < 1e-9);
  }
}

TEST_CASE("adam examples") {
  Tensor w({3}, {1.0, -2.0, 0.5});
  w.set_requires_grad(true);
  SUBCASE("zero gradient leaves weights") {
    Adam adam({w}, 0.1, 0.9, 0.999, 1e-8);
    w.zero_grad();
    adam.step();
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(adam.step_count() == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    Adam adam({w}, 0.1, 0.9, 0.999, 1e-8);
    w.zero_grad();
    w.grad_buffer()[0] = 3.0;
    w.grad_buffer()[1] = -0.01;
    adam.step();
    CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(-1.9).epsilon(1e-5));
  }
  SUBCASE("learning rate zero is a no-op") {
    Adam adam({w}, 0.0, 0.9, 0.999, 1e-8);
    w.zero_grad();
    w.grad_buffer()[2] = 5.0;
    adam.step();
    CHECK(w[2] == 0.5);
  }
}

TEST_CASE("train config json") {
  TrainConfig c = tiny_config();
  c.ablations.no_tel = true;
  c.split_ratios = {0.6, 0.2, 0.2};
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.ablations.no_tel);

  nlohmann::json j = c.to_json();
  j["momentum"] = 0.5;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"ablation", {"no_magic"}}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"learning_rate", -1.0}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"C", 6}, {"K", 4}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"norm_scale", 0.0}}), ConfigError);
  CHECK(TrainConfig::from_json(nlohmann::json::object()).channels == TrainConfig{}.channels);
}

TEST_CASE("samples carry normalized inputs and raw targets") {
  const Universe u = tiny_universe(12, 1, {1, 0, 0});
  const TrainConfig cfg = tiny_config();
  const auto samples = build_samples(u.data.graph, u.data.targets, u.splits.train, cfg);
  REQUIRE(samples.size() == 12);
  for (const auto& s : samples) {
    const auto& node = u.data.graph.node(u.data.graph.index_of(s.id));
    CHECK(s.target_raw == u.data.targets.at(s.id));
    CHECK(s.ego.target[0] == doctest::Approx(std::log1p(s.target_raw[0])));
    CHECK(s.ego.padded_gmv[cfg.t_max - 1] == doctest::Approx(std::log1p(node.gmv.back())));
    CHECK(s.is_new == (node.observed_len() < 10));
  }
  TargetMap missing = u.data.targets;
  missing.erase(u.splits.train.front());
  CHECK_THROWS_AS(build_samples(u.data.graph, missing, u.splits.train, cfg), NotFoundError);
}

TEST_CASE("learning rate zero keeps every parameter") {
  const Universe u = tiny_universe(10, 2, {1, 0, 0});
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 0.0;
  const TrainResult r = train(u.data.graph, u.data.targets, u.splits, cfg);
  const GaiaModel fresh(cfg.model_config(u.data.graph.d_temporal(), u.data.graph.d_static()),
                        Rng::derive(cfg.seed, 1));
  const auto named = fresh.named_parameters();
  REQUIRE(named.size() == r.checkpoint.params.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first == "head.b_P") continue;  // set from the target mean before training
    const auto d = named[i].second.data();
    CHECK(std::vector<double>(d.begin(), d.end()) == r.checkpoint.params[i].data);
  }
  CHECK(r.log.size() == cfg.epochs);
  // Shuffled batches sum in a different order, so only rounding may differ.
  CHECK(r.log.front().train_loss == doctest::Approx(r.log.back().train_loss).epsilon(1e-12));
}

TEST_CASE("overfits a single node") {
  const Universe u = tiny_universe(6, 4, {1, 0, 0});
  Splits one;
  one.train = {u.splits.train.front()};
  TrainConfig cfg = tiny_config();
  cfg.epochs = 300;
  cfg.learning_rate = 1e-2;
  const TrainResult r = train(u.data.graph, u.data.targets, one, cfg);
  const double first = r.log.front().train_loss;
  double best = first;
  for (const auto& row : r.log) best = std::min(best, row.train_loss);
  CHECK(first > 0.0);
  CHECK(best < 1e-3 * first);
}

TEST_CASE("same seed gives identical loss curves") {
  const Universe u = tiny_universe(20, 5, {0.7, 0.3, 0.0});
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 4;
  auto curve = [&](std::size_t threads) {
    TrainConfig c = cfg;
    c.threads = threads;
    const TrainResult r = train(u.data.graph, u.data.targets, u.splits, c);
    std::ostringstream out;
    write_epoch_log(r.log, out, false);
    return std::make_pair(out.str(), serialize(r.checkpoint));
  };
  const auto a = curve(1);
  const auto b = curve(1);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  // Evaluation threads never change the numbers.
  CHECK(curve(3).first == a.first);

  TrainConfig other = cfg;
  other.seed = 99;
  std::ostringstream c;
  write_epoch_log(train(u.data.graph, u.data.targets, u.splits, other).log, c, false);
  CHECK(c.str() != a.first);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Universe u = tiny_universe(20, 6, {0.6, 0.2, 0.2});
  const TrainConfig cfg = tiny_config();
  const TrainResult r = train(u.data.graph, u.data.targets, u.splits, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "gaia_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  save_checkpoint(r.checkpoint, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(serialize(back) == serialize(r.checkpoint));
  CHECK(back.adam_step == r.checkpoint.adam_step);
  CHECK(back.rng_state == r.checkpoint.rng_state);

  const EvalReport a = evaluate(r.checkpoint, u.data.graph, u.data.targets, u.splits.test);
  const EvalReport b = evaluate(back, u.data.graph, u.data.targets, u.splits.test);
  CHECK(a.predictions == b.predictions);
  CHECK(a.total.mae == b.total.mae);

  {
    std::ofstream junk(dir / "junk.ckpt", std::ios::binary);
    junk << "NOPE and some bytes";
  }
  try {
    load_checkpoint(dir / "junk.ckpt");
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }
  {
    const std::string bytes = serialize(r.checkpoint);
    std::ofstream cut(dir / "cut.ckpt", std::ios::binary);
    cut << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("every ablation trains and evaluates") {
  const Universe u = tiny_universe(16, 7, {0.5, 0.25, 0.25});
  for (const auto& names : std::vector<std::vector<std::string>>{
           {}, {"no_ita"}, {"no_ffl"}, {"no_tel"}, {"no_graph"}, {"no_ita", "no_ffl", "no_tel"}}) {
    CAPTURE(names.size());
    TrainConfig cfg = tiny_config();
    cfg.ablations = Ablations::parse(names);
    cfg.epochs = 2;
    const TrainResult r = train(u.data.graph, u.data.targets, u.splits, cfg);
    const EvalReport rep = evaluate(r.checkpoint, u.data.graph, u.data.targets, u.splits.test);
    CHECK(std::isfinite(rep.total.mae));
    CHECK(rep.monthly.size() == cfg.horizon);
    for (const auto& row : rep.predictions)
      for (double v : row) CHECK(v >= 0.0);
  }
}

TEST_CASE("non-finite loss raises a divergence error") {
  Universe u = tiny_universe(8, 8, {1, 0, 0});
  TrainConfig cfg = tiny_config();
  cfg.normalization = Normalization::None;
  // Alternating huge targets so the mean-initialized head cannot sit on them.
  bool huge = false;
  for (const auto& id : u.splits.train) {
    u.data.targets[id].assign(cfg.horizon, huge ? 1e300 : 0.0);
    huge = !huge;
  }
  try {
    train(u.data.graph, u.data.targets, u.splits, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("scoring splits new and old shops") {
  const EvalReport r = score_forecasts({"a", "b", "c"}, {{1, 1}, {2, 2}, {10, 0}},
                                       {{1, 1}, {3, 3}, {5, 5}}, {true, false, true});
  CHECK(r.total.mae == doctest::Approx(2.0 / 3.0));
  CHECK(r.new_shops.count == 2);
  CHECK(r.new_shops.mae == 0.0);
  CHECK(r.old_shops.mae == 2.0);
  CHECK(r.monthly[0].mae == doctest::Approx(2.0));
  CHECK(r.monthly[1].mae == doctest::Approx(2.0));
}

TEST_CASE("baselines on a constant series") {
  const std::vector<double> flat(24, 7.0);
  for (const char* name : {"last_value", "seasonal_naive", "ar_ls"}) {
    const BaselineForecast f = run_baseline(name, flat, 3);
    REQUIRE(f.values.size() == 3);
    for (double v : f.values) CHECK(v == doctest::Approx(7.0).epsilon(1e-9));
    CHECK_FALSE(f.fell_back);
  }
}

TEST_CASE("seasonal naive reproduces a period-12 sinusoid") {
  std::vector<double> full;
  for (int t = 0; t < 27; ++t) full.push_back(100 + 30 * std::sin(2 * std::numbers::pi * t / 12.0));
  const std::vector<double> hist(full.begin(), full.begin() + 24);
  const BaselineForecast f = seasonal_naive(hist, 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(f.values[k] - full[24 + k]) < 1e-9);

  const BaselineForecast short_hist = seasonal_naive(std::vector<double>{4, 5, 6}, 2);
  CHECK(short_hist.fell_back);
  CHECK(short_hist.values == std::vector<double>{6, 6});
}

TEST_CASE("ar fit recovers planted coefficients") {
  // y_t = 3 + 0.6 y_{t-1} - 0.3 y_{t-2}, exact.
  std::vector<double> y{10, 12};
  for (int t = 2; t < 40; ++t) y.push_back(3 + 0.6 * y[t - 1] - 0.3 * y[t - 2]);
  const ArFit fit = fit_ar(y, 2);
  CHECK(std::abs(fit.intercept - 3.0) < 1e-6);
  CHECK(std::abs(fit.coefficients[0] - 0.6) < 1e-6);
  CHECK(std::abs(fit.coefficients[1] + 0.3) < 1e-6);

  const std::vector<double> head(y.begin(), y.begin() + 30);
  const BaselineForecast f = ar_ls(head, 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(f.values[k] - y[30 + k]) < 1e-6);

  CHECK(ar_ls(std::vector<double>{1, 2}, 3).fell_back);
  CHECK_THROWS_AS(fit_ar(std::vector<double>{1, 2}, 2), DataError);
}

TEST_CASE("baseline forecasts are clamped at zero") {
  const std::vector<double> falling{50, 40, 30, 20, 10, 0};
  const BaselineForecast f = ar_ls(falling, 3, 1);
  for (double v : f.values) CHECK(v >= 0.0);
  CHECK(f.values.back() == 0.0);
}

TEST_CASE("epoch log csv") {
  EpochLog row;
  row.epoch = 1;
  row.train_loss = 0.5;
  row.seconds = 2.5;
  std::ostringstream timed, untimed;
  write_epoch_log({row}, timed, true);
  write_epoch_log({row}, untimed, false);
  CHECK(timed.str().rfind("epoch,train_loss,val_mae,val_rmse,val_mape,seconds\n", 0) == 0);
  CHECK(timed.str().find("2.5") != std::string::npos);
  CHECK(untimed.str().find("2.5") == std::string::npos);
}
