#include "gaia/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <ostream>

#include "gaia/errors.hpp"
#include "gaia/rng.hpp"

namespace gaia {

using nlohmann::json;

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("infeasible spec: " + msg); };
  if (n_sellers < 1) fail("n_sellers must be >= 1");
  if (t_max < kMinObserved) fail("t_max must be >= 3");
  if (horizon < 1) fail("horizon must be >= 1");
  for (double p : {supply_edge_prob, owner_edge_prob, new_shop_fraction}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must lie in [0, 1]");
  }
  if (lead_lag_months >= t_max) fail("lead_lag_months must be < t_max");
  if (season_period < 1) fail("season_period must be >= 1");
  if (season_amplitude < 0.0) fail("season_amplitude must be >= 0");
  if (trend_slope_range[0] > trend_slope_range[1]) fail("trend_slope_range is reversed");
  if (noise_sigma < 0.0) fail("noise_sigma must be >= 0");
  if (!(base_gmv_range[0] > 0.0) || base_gmv_range[0] > base_gmv_range[1]) {
    fail("base_gmv_range must be positive and ordered");
  }
  if (n_industries < 1 || n_regions < 1) fail("need at least one industry and region");
  if (!deficiency_dist.empty()) {
    if (deficiency_dist.size() != t_max - kMinObserved + 1) {
      fail("deficiency_dist needs one weight per observed_len in 3..t_max");
    }
    double total = 0.0;
    for (double w : deficiency_dist) {
      if (w < 0.0) fail("deficiency_dist weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) fail("deficiency_dist must sum to 1");
  } else {
    const bool has_new = new_shop_threshold > kMinObserved;
    const bool has_old = new_shop_threshold <= t_max;
    if (new_shop_fraction > 0.0 && !has_new) fail("no history lengths below new_shop_threshold");
    if (new_shop_fraction < 1.0 && !has_old) fail("no history lengths at or above new_shop_threshold");
  }
}

std::vector<double> SynthSpec::history_weights() const {
  if (!deficiency_dist.empty()) return deficiency_dist;
  std::vector<double> w(t_max - kMinObserved + 1, 0.0);
  const std::size_t threshold = std::clamp(new_shop_threshold, kMinObserved, t_max + 1);
  const std::size_t n_new = threshold - kMinObserved;
  const std::size_t n_old = t_max + 1 - threshold;
  for (std::size_t len = kMinObserved; len <= t_max; ++len) {
    const bool is_new = len < threshold;
    w[len - kMinObserved] = is_new ? new_shop_fraction / static_cast<double>(n_new)
                                   : (1.0 - new_shop_fraction) / static_cast<double>(n_old);
  }
  return w;
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  try {
    s.n_sellers = j.value("n_sellers", s.n_sellers);
    s.t_max = j.value("t_max", s.t_max);
    s.horizon = j.value("horizon", s.horizon);
    s.supply_edge_prob = j.value("supply_edge_prob", s.supply_edge_prob);
    s.owner_edge_prob = j.value("owner_edge_prob", s.owner_edge_prob);
    s.lead_lag_months = j.value("lead_lag_months", s.lead_lag_months);
    s.season_period = j.value("season_period", s.season_period);
    s.season_amplitude = j.value("season_amplitude", s.season_amplitude);
    s.trend_slope_range = j.value("trend_slope_range", s.trend_slope_range);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.deficiency_dist = j.value("deficiency_dist", s.deficiency_dist);
    s.new_shop_fraction = j.value("new_shop_fraction", s.new_shop_fraction);
    s.new_shop_threshold = j.value("new_shop_threshold", s.new_shop_threshold);
    s.base_gmv_range = j.value("base_gmv_range", s.base_gmv_range);
    s.n_industries = j.value("n_industries", s.n_industries);
    s.n_regions = j.value("n_regions", s.n_regions);
    s.start_month = j.value("start_month", s.start_month);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid spec field: ") + e.what());
  }
  s.validate();
  return s;
}

json SynthSpec::to_json() const {
  return json{{"n_sellers", n_sellers},
              {"t_max", t_max},
              {"horizon", horizon},
              {"supply_edge_prob", supply_edge_prob},
              {"owner_edge_prob", owner_edge_prob},
              {"lead_lag_months", lead_lag_months},
              {"season_period", season_period},
              {"season_amplitude", season_amplitude},
              {"trend_slope_range", trend_slope_range},
              {"noise_sigma", noise_sigma},
              {"deficiency_dist", deficiency_dist},
              {"new_shop_fraction", new_shop_fraction},
              {"new_shop_threshold", new_shop_threshold},
              {"base_gmv_range", base_gmv_range},
              {"n_industries", n_industries},
              {"n_regions", n_regions},
              {"start_month", start_month},
              {"seed", seed}};
}

namespace {

constexpr std::uint64_t kStructureStream = 0;
// Per-node streams start at 1 for series noise; feature noise uses a second
// block so that features never consume draws that depend on target months.
constexpr std::uint64_t kFeatureStreamBase = 1ULL << 40;

// Typical log1p count, subtracted so the count columns sit near zero like the one-hots.
constexpr double kCountLogOffset = 5.0;

std::string node_id(std::size_t i) {
  std::string digits = std::to_string(i);
  return "s" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace

std::vector<double> synth_temporal_features(const SynthSpec& spec, std::size_t node_index,
                                            const std::vector<double>& series,
                                            std::size_t observed_len) {
  Rng rng(Rng::derive(spec.seed, kFeatureStreamBase + node_index));
  // Average ticket size fixes the customer count scale for this seller.
  const double ticket = rng.uniform(20.0, 200.0);
  const std::size_t first = spec.t_max - observed_len;
  std::vector<double> out;
  out.reserve(observed_len * kSynthTemporalDims);
  for (std::size_t t = first; t < spec.t_max; ++t) {
    const std::size_t month = (t + spec.start_month) % 12;
    for (std::size_t m = 0; m < 12; ++m) out.push_back(m == month ? 1.0 : 0.0);
    const double customers = series[t] / ticket * std::exp(0.05 * rng.normal());
    const double orders = customers * 1.3 * std::exp(0.05 * rng.normal());
    out.push_back(std::log1p(customers) - kCountLogOffset);
    out.push_back(std::log1p(orders) - kCountLogOffset);
  }
  return out;
}

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_sellers;
  const std::size_t total = spec.t_max + spec.horizon;
  const double period = static_cast<double>(spec.season_period);
  Rng rng(Rng::derive(spec.seed, kStructureStream));

  struct Plan {
    NodeTruth truth;
    std::size_t retailer_index = 0;
  };
  std::vector<Plan> plan(n);
  std::vector<std::size_t> retailers;
  std::vector<Edge> edges;
  const std::vector<double> hist = spec.history_weights();
  const double log_lo = std::log(spec.base_gmv_range[0]);
  const double log_hi = std::log(spec.base_gmv_range[1]);

  for (std::size_t i = 0; i < n; ++i) {
    NodeTruth& t = plan[i].truth;
    t.id = node_id(i);
    t.base = std::exp(rng.uniform(log_lo, log_hi));
    t.region = rng.below(spec.n_regions);
    t.observed_len = SynthSpec::kMinObserved + rng.categorical(hist);
    const bool supplier = !retailers.empty() && rng.uniform() < spec.supply_edge_prob;
    if (supplier) {
      const std::size_t j = retailers[rng.below(retailers.size())];
      const NodeTruth& r = plan[j].truth;
      t.role = SellerRole::Supplier;
      t.retailer = r.id;
      t.industry = r.industry;
      t.season_phase = r.season_phase;
      t.trend = r.trend;
      plan[i].retailer_index = j;
      edges.push_back({t.id, r.id, Relation::SupplyChain});
    } else {
      t.industry = rng.below(spec.n_industries);
      // Phase is independent of every static feature, so a short history
      // can only recover it from its own months or from its suppliers.
      t.season_phase = rng.uniform(0.0, period);
      t.trend = rng.uniform(spec.trend_slope_range[0], spec.trend_slope_range[1]);
      if (!retailers.empty() && rng.uniform() < spec.owner_edge_prob) {
        const std::size_t k = retailers[rng.below(retailers.size())];
        t.trend = plan[k].truth.trend;
        edges.push_back({plan[k].truth.id, t.id, Relation::SameOwner});
      }
      retailers.push_back(i);
    }
  }

  auto retailer_clean = [&](const NodeTruth& r, double t) {
    const double season = std::sin(2.0 * std::numbers::pi * (t + r.season_phase) / period);
    return r.base * (1.0 + spec.season_amplitude * season + r.trend * t);
  };

  SynthResult out;
  out.series.resize(n);
  out.clean.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeTruth& t = plan[i].truth;
    Rng noise(Rng::derive(spec.seed, i + 1));
    auto& clean = out.clean[i];
    auto& series = out.series[i];
    clean.resize(total);
    series.resize(total);
    for (std::size_t m = 0; m < total; ++m) {
      const double tm = static_cast<double>(m);
      if (t.role == SellerRole::Supplier) {
        const NodeTruth& r = plan[plan[i].retailer_index].truth;
        clean[m] = t.base / r.base *
                   retailer_clean(r, tm + static_cast<double>(spec.lead_lag_months));
      } else {
        clean[m] = retailer_clean(t, tm);
      }
      double v = clean[m] + t.base * spec.noise_sigma * noise.normal();
      if (v < 0.0) {
        v = 0.0;
        ++out.clamp_events;
      }
      series[m] = v;
    }
  }

  out.graph = ESellerGraph(spec.t_max, kSynthTemporalDims, spec.n_industries + spec.n_regions);
  out.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NodeTruth t = plan[i].truth;
    const auto& series = out.series[i];
    SellerNode node;
    node.id = t.id;
    node.gmv.assign(series.begin() + static_cast<std::ptrdiff_t>(spec.t_max - t.observed_len),
                    series.begin() + static_cast<std::ptrdiff_t>(spec.t_max));
    node.temporal_feats = synth_temporal_features(spec, i, series, t.observed_len);
    node.static_feats.assign(spec.n_industries + spec.n_regions, 0.0);
    node.static_feats[t.industry] = 1.0;
    node.static_feats[spec.n_industries + t.region] = 1.0;
    out.graph.add_node(std::move(node));
    t.target.assign(series.begin() + static_cast<std::ptrdiff_t>(spec.t_max), series.end());
    out.targets.emplace(t.id, t.target);
    out.truth.push_back(std::move(t));
  }
  for (auto& e : edges) out.graph.add_edge(std::move(e));

  // Cross-check the planted lead: supplier(t) = c * retailer(t + lag) on the
  // overlap of the clean series.
  const std::size_t lag = spec.lead_lag_months;
  for (std::size_t i = 0; i < n; ++i) {
    if (plan[i].truth.role != SellerRole::Supplier) continue;
    const auto& s = out.clean[i];
    const auto& r = out.clean[plan[i].retailer_index];
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m + lag < total; ++m) {
      num += s[m] * r[m + lag];
      den += r[m + lag] * r[m + lag];
    }
    const double c = den > 0.0 ? num / den : 0.0;
    for (std::size_t m = 0; m + lag < total; ++m) {
      out.lag_fit_residual = std::max(out.lag_fit_residual, std::abs(s[m] - c * r[m + lag]));
    }
  }
  return out;
}

void write_truth(const SynthSpec& spec, const SynthResult& result, std::ostream& out) {
  out << json{{"kind", "meta"},
              {"lead_lag_months", spec.lead_lag_months},
              {"horizon", spec.horizon},
              {"t_max", spec.t_max},
              {"season_period", spec.season_period},
              {"seed", spec.seed},
              {"clamp_events", result.clamp_events}}
             .dump()
      << '\n';
  for (const auto& t : result.truth) {
    json rec{{"kind", "truth"},
             {"id", t.id},
             {"target", t.target},
             {"role", t.role == SellerRole::Supplier ? "supplier" : "retailer"},
             {"observed_len", t.observed_len},
             {"base", t.base},
             {"season_phase", t.season_phase},
             {"trend", t.trend},
             {"industry", t.industry},
             {"region", t.region}};
    if (t.role == SellerRole::Supplier) {
      rec["retailer"] = t.retailer;
      rec["lag"] = spec.lead_lag_months;
    }
    out << rec.dump() << '\n';
  }
}

TargetMap read_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open truth file: " + path.string());
  TargetMap targets;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(text);
      if (rec.at("kind") != "truth") continue;
      targets[rec.at("id").get<std::string>()] = rec.at("target").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError("truth line " + std::to_string(line) + ": " + e.what());
    }
  }
  return targets;
}

namespace {

// Largest-remainder apportionment of `total` items over `ratios`.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(total);
    counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[s] = exact - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % 3, ++assigned) ++counts[order[i]];
  return counts;
}

}  // namespace

Splits split(const ESellerGraph& graph, std::array<double, 3> ratios, std::uint64_t seed,
             std::size_t new_shop_threshold) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || *std::min_element(ratios.begin(), ratios.end()) < 0.0) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  const std::size_t n = graph.size();
  if (n == 0) throw DataError("empty split: graph has no nodes");

  std::array<std::vector<std::size_t>, 2> strata;
  for (std::size_t i = 0; i < n; ++i)
    strata[graph.node(i).observed_len() < new_shop_threshold ? 0 : 1].push_back(i);

  const auto global = apportion(n, ratios);
  // Floors per stratum, then distribute the leftover units so that both the
  // global counts and the per-stratum +/-1 bound hold.
  std::array<std::array<std::size_t, 3>, 2> counts{};
  std::array<std::array<double, 3>, 2> frac{};
  std::array<std::size_t, 3> col_left = global;
  std::array<std::size_t, 2> row_left{};
  for (std::size_t h = 0; h < 2; ++h) {
    std::size_t used = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = ratios[s] * static_cast<double>(strata[h].size());
      counts[h][s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[h][s] = exact - static_cast<double>(counts[h][s]);
      used += counts[h][s];
      col_left[s] -= counts[h][s];
    }
    row_left[h] = strata[h].size() - used;
  }
  // Small exhaustive search over which splits absorb each stratum's leftovers.
  std::array<std::array<int, 3>, 2> best{};
  double best_score = -1.0;
  for (int m0 = 0; m0 < 8; ++m0)
    for (int m1 = 0; m1 < 8; ++m1) {
      const int masks[2] = {m0, m1};
      bool ok = true;
      double score = 0.0;
      std::array<std::size_t, 3> cols{};
      for (std::size_t h = 0; h < 2 && ok; ++h) {
        std::size_t bits = 0;
        for (std::size_t s = 0; s < 3; ++s)
          if (masks[h] >> s & 1) {
            ++bits;
            ++cols[s];
            score += frac[h][s];
          }
        ok = bits == row_left[h];
      }
      for (std::size_t s = 0; s < 3 && ok; ++s) ok = cols[s] == col_left[s];
      if (ok && score > best_score) {
        best_score = score;
        for (std::size_t h = 0; h < 2; ++h)
          for (std::size_t s = 0; s < 3; ++s) best[h][s] = masks[h] >> s & 1;
      }
    }
  if (best_score < 0.0) throw DataError("split: no consistent stratified allocation");

  Rng rng(seed);
  std::array<std::vector<std::size_t>, 3> members;
  for (std::size_t h = 0; h < 2; ++h) {
    auto ids = strata[h];
    rng.shuffle(ids);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t c = counts[h][s] + static_cast<std::size_t>(best[h][s]);
      members[s].insert(members[s].end(), ids.begin() + static_cast<std::ptrdiff_t>(pos),
                        ids.begin() + static_cast<std::ptrdiff_t>(pos + c));
      pos += c;
    }
  }
  Splits out;
  std::array<std::vector<std::string>*, 3> dest{&out.train, &out.val, &out.test};
  for (std::size_t s = 0; s < 3; ++s) {
    if (ratios[s] > 0.0 && members[s].empty()) {
      throw DataError("empty split: not enough nodes for ratio " + std::to_string(ratios[s]));
    }
    std::sort(members[s].begin(), members[s].end());
    for (std::size_t i : members[s]) dest[s]->push_back(graph.node(i).id);
  }
  return out;
}

}  // namespace gaia
