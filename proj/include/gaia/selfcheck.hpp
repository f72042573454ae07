#pragma once

#include <cstdint>

#include "gaia/gradcheck.hpp"
#include "gaia/model.hpp"

namespace gaia {

// Small fixture used by the gradient self-check: 4 nodes, T_max = 8,
// C = 4, K = 2, L = 2, T' = 2, with both relation types present.
struct SelfCheckFixture {
  ESellerGraph graph{8, 3, 2};
  ModelConfig config;
  std::vector<EgoSubgraph> egos;  // one per node, normalized-scale inputs
};

SelfCheckFixture make_selfcheck_fixture(std::uint64_t seed, const Ablations& ablations = {});

// Finite-difference check of every model parameter under an MSE loss over
// all fixture nodes.
GradCheckReport model_gradcheck(std::uint64_t seed, const Ablations& ablations = {},
                                double tolerance = 1e-4);

}  // namespace gaia
