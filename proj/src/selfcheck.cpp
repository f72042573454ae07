#include "gaia/selfcheck.hpp"

#include "gaia/ops.hpp"
#include "gaia/rng.hpp"

namespace gaia {

SelfCheckFixture make_selfcheck_fixture(std::uint64_t seed, const Ablations& ablations) {
  SelfCheckFixture fx;
  Rng rng(Rng::derive(seed, 11));
  const std::size_t lens[4] = {8, 5, 3, 8};
  for (std::size_t i = 0; i < 4; ++i) {
    SellerNode n;
    n.id = "n" + std::to_string(i);
    for (std::size_t t = 0; t < lens[i]; ++t) n.gmv.push_back(rng.uniform(0.5, 2.0));
    for (std::size_t k = 0; k < lens[i] * 3; ++k) n.temporal_feats.push_back(rng.uniform(-1, 1));
    n.static_feats = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    fx.graph.add_node(std::move(n));
  }
  fx.graph.add_edge({"n1", "n0", Relation::SupplyChain});
  fx.graph.add_edge({"n2", "n0", Relation::SupplyChain});
  fx.graph.add_edge({"n3", "n1", Relation::SupplyChain});
  fx.graph.add_edge({"n0", "n3", Relation::SameOwner});

  fx.config.t_max = 8;
  fx.config.horizon = 2;
  fx.config.channels = 4;
  fx.config.kernel_groups = 2;
  fx.config.layers = 2;
  fx.config.d_temporal = 3;
  fx.config.d_static = 2;
  fx.config.ablations = ablations;
  for (std::size_t i = 0; i < 4; ++i) {
    auto ego = extract_ego(fx.graph, i, 2, 10, seed);
    ego.target = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
    fx.egos.push_back(std::move(ego));
  }
  return fx;
}

GradCheckReport model_gradcheck(std::uint64_t seed, const Ablations& ablations,
                                double tolerance) {
  const SelfCheckFixture fx = make_selfcheck_fixture(seed, ablations);
  GaiaModel model(fx.config, seed);
  // Nonzero biases and edge weights so every parameter carries gradient.
  Rng rng(Rng::derive(seed, 12));
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, t] : model.named_parameters()) {
    for (double& v : t.data_mut()) v += rng.uniform(-0.1, 0.1);
    params.push_back(t);
    names.push_back(name);
  }
  std::vector<double> truth;
  for (const auto& ego : fx.egos) truth.insert(truth.end(), ego.target.begin(), ego.target.end());

  auto loss = [&] {
    std::vector<Tensor> preds;
    for (const auto& ego : fx.egos) preds.push_back(model.forward(ego));
    const Tensor pred = ops::concat_rows(preds);
    return ops::mse_loss(pred, Tensor(pred.shape(), truth));
  };
  GradCheckOptions options;
  options.tolerance = tolerance;
  return check_gradients(loss, params, options, names);
}

}  // namespace gaia
