#include <doctest.h>

#include "gaia/encoder.hpp"
#include "gaia/errors.hpp"
#include "gaia/gradcheck.hpp"
#include "gaia/ops.hpp"
#include "gaia/model.hpp"
#include "support.hpp"

using namespace gaia;
using namespace testing_support;

namespace {

ref::Ffl to_ref(const FFLParams& p) {
  return {to_vec(p.w_I), to_vec(p.b_I), to_mat(p.W_T), to_mat(p.b_T),
          to_mat(p.W_S), to_vec(p.b_S), to_mat(p.W_F), to_mat(p.b_F)};
}

// Perturb every parameter so biases are nonzero.
template <typename... Ts>
void jitter(Rng& rng, Ts&... ts) {
  (
      [&] {
        for (double& v : ts.data_mut()) v += rng.uniform(-0.5, 0.5);
      }(),
      ...);
}

void jitter_ffl(FFLParams& p, Rng& rng) {
  jitter(rng, p.w_I, p.b_I, p.W_T, p.b_T, p.W_S, p.b_S, p.W_F, p.b_F);
}

std::vector<ref::Kernel> kernels(const std::vector<Tensor>& ks) {
  std::vector<ref::Kernel> out;
  for (const auto& k : ks) out.push_back(to_kernel(k));
  return out;
}

}  // namespace

TEST_CASE("ffl all-zero inputs and weights give zero") {
  Rng rng(1);
  FFLParams p = init_ffl(5, 4, 2, 3, rng);
  for (Tensor* t : {&p.w_I, &p.b_I, &p.W_T, &p.b_T, &p.W_S, &p.b_S, &p.W_F, &p.b_F})
    for (double& v : t->data_mut()) v = 0.0;
  const Tensor s = ffl_forward(p, Tensor({5}), Tensor({5, 2}), Tensor({3}));
  CHECK(s.shape() == Shape{5, 4});
  for (double v : s.data()) CHECK(v == 0.0);
}

TEST_CASE("ffl block-identity fusion isolates the lifted GMV") {
  Rng rng(2);
  const std::size_t T = 6, C = 4;
  FFLParams p = init_ffl(T, C, 2, 3, rng);
  jitter_ffl(p, rng);
  for (double& v : p.W_F.data_mut()) v = 0.0;
  for (double& v : p.b_F.data_mut()) v = 0.0;
  for (std::size_t c = 0; c < C; ++c) p.W_F.data_mut()[c * 3 * C + c] = 1.0;
  const Tensor z = random_tensor({T}, rng, 0, 3);
  const Tensor s = ffl_forward(p, z, random_tensor({T, 2}, rng), random_tensor({3}, rng));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      CHECK(s.at(t, c) == doctest::Approx(z[t] * p.w_I[c] + p.b_I[c]).epsilon(1e-15));
}

TEST_CASE("ffl matches the loop reference") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + rng.below(10), C = 1 + rng.below(6);
    const std::size_t dt = 1 + rng.below(3), ds = 1 + rng.below(4);
    FFLParams p = init_ffl(T, C, dt, ds, rng);
    jitter_ffl(p, rng);
    const Tensor z = random_tensor({T}, rng, 0, 5);
    const Tensor tf = random_tensor({T, dt}, rng);
    const Tensor sf = random_tensor({ds}, rng);
    const ref::Mat expect = ref::ffl(to_ref(p), to_vec(z), to_mat(tf), to_vec(sf));
    CHECK(max_abs_diff(expect, ffl_forward(p, z, tf, sf)) < 1e-9);
  }
}

TEST_CASE("ffl dimension errors") {
  Rng rng(4);
  const FFLParams p = init_ffl(5, 4, 2, 3, rng);
  CHECK_THROWS_AS(ffl_forward(p, Tensor({5}), Tensor({5, 3}), Tensor({3})), DimensionError);
  CHECK_THROWS_AS(ffl_forward(p, Tensor({4}), Tensor({4, 2}), Tensor({3})), DimensionError);
  CHECK_THROWS_AS(ffl_forward(p, Tensor({5}), Tensor({5, 2}), Tensor({2})), DimensionError);
}

TEST_CASE("tel group shapes") {
  Rng rng(5);
  const TELParams p = init_tel(8, 2, rng);
  REQUIRE(p.capture.size() == 2);
  CHECK(p.capture[0].shape() == Shape{2, 8, 4});
  CHECK(p.capture[1].shape() == Shape{4, 8, 4});
  CHECK(p.denoise[1].shape() == Shape{4, 8, 4});
  CHECK_THROWS_AS(init_tel(6, 4, rng), ConfigError);

  const TELParams single = init_tel_single(8, ModelConfig::kSingleTelWidth, rng);
  CHECK(single.capture.size() == 1);
  CHECK(single.denoise.size() == 1);
  CHECK(single.capture[0].shape() == Shape{4, 8, 8});
}

TEST_CASE("tel examples") {
  Rng rng(6);
  const std::size_t T = 8, C = 4;
  SUBCASE("negative capture kills the gate") {
    TELParams p = init_tel(C, 2, rng);
    // Positive inputs and all-negative capture kernels.
    for (auto& k : p.capture)
      for (double& v : k.data_mut()) v = -std::abs(v) - 0.01;
    const Tensor e = tel_forward(p, random_tensor({T, C}, rng, 0.1, 1.0));
    for (double v : e.data()) CHECK(v == 0.0);
  }
  SUBCASE("zero denoise halves relu(capture)") {
    TELParams p = init_tel(C, 2, rng);
    for (auto& k : p.denoise)
      for (double& v : k.data_mut()) v = 0.0;
    const Tensor s = random_tensor({T, C}, rng);
    const Tensor e = tel_forward(p, s);
    std::vector<Tensor> parts;
    for (const auto& k : p.capture) parts.push_back(ops::conv1d_causal(s, k));
    const Tensor sc = ops::concat_lastdim(parts);
    for (std::size_t i = 0; i < e.numel(); ++i) CHECK(e[i] == 0.5 * std::max(0.0, sc[i]));
  }
}

TEST_CASE("tel matches the loop reference") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t K = 1 + rng.below(3);
    const std::size_t C = K * (1 + rng.below(3));
    const std::size_t T = (std::size_t{1} << K) + rng.below(6);
    const TELParams p = init_tel(C, K, rng);
    const Tensor s = random_tensor({T, C}, rng, -2, 2);
    const ref::Mat expect = ref::tel(kernels(p.capture), kernels(p.denoise), to_mat(s));
    CHECK(max_abs_diff(expect, tel_forward(p, s)) < 1e-9);
  }
}

TEST_CASE("property: tel gate bounded by relu(capture)") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const TELParams p = init_tel(6, 3, rng);
    const Tensor s = random_tensor({10, 6}, rng, -3, 3);
    const Tensor e = tel_forward(p, s);
    std::vector<Tensor> parts;
    for (const auto& k : p.capture) parts.push_back(ops::conv1d_causal(s, k));
    const Tensor sc = ops::concat_lastdim(parts);
    for (std::size_t i = 0; i < e.numel(); ++i) {
      CHECK(e[i] >= 0.0);
      CHECK(e[i] <= std::max(0.0, sc[i]));
    }
  }
}

TEST_CASE("tel causality probe") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const TELParams p = init_tel(4, 2, rng);
    const std::size_t T = 10, t = rng.below(T);
    const Tensor s = random_tensor({T, 4}, rng);
    Tensor s2 = s.clone();
    for (std::size_t i = t * 4; i < s2.numel(); ++i) s2.data_mut()[i] += rng.uniform(-3, 3);
    const Tensor e = tel_forward(p, s), e2 = tel_forward(p, s2);
    for (std::size_t i = 0; i < t * 4; ++i) CHECK(e[i] == e2[i]);
  }
}

TEST_CASE("ffl then tel passes a gradient check") {
  Rng rng(10);
  const std::size_t T = 8, C = 4;
  FFLParams f = init_ffl(T, C, 2, 3, rng);
  jitter_ffl(f, rng);
  TELParams tel = init_tel(C, 2, rng);
  const Tensor z = random_tensor({T}, rng, 0, 2);
  const Tensor tf = random_tensor({T, 2}, rng);
  const Tensor sf = random_tensor({3}, rng);
  const Tensor w = random_tensor({T, C}, rng);
  std::vector<Tensor> params{f.w_I, f.b_I, f.W_T, f.b_T, f.W_S, f.b_S, f.W_F, f.b_F};
  for (auto& k : tel.capture) params.push_back(k);
  for (auto& k : tel.denoise) params.push_back(k);
  auto loss = [&] { return ops::sum(ops::hadamard(tel_forward(tel, ffl_forward(f, z, tf, sf)), w)); };
  const auto report = check_gradients(loss, params, {.step = 1e-5, .tolerance = 1e-4});
  CHECK(report.pass);
}

TEST_CASE("raw projection uses one shared bias") {
  Rng rng(11);
  RawProjectionParams p = init_raw_projection(4, 2, 3, rng);
  CHECK(p.W.shape() == Shape{4, 6});
  CHECK(p.b.shape() == Shape{4});
  for (double& v : p.b.data_mut()) v = rng.uniform(-1, 1);
  const Tensor s = raw_projection_forward(p, Tensor({5}), Tensor({5, 2}), Tensor({3}));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 4; ++c) CHECK(s.at(t, c) == p.b[c]);
}

TEST_CASE("xavier init stays within its bound") {
  Rng rng(12);
  const Tensor w = xavier_uniform({30, 20}, 30, 20, rng);
  const double a = std::sqrt(6.0 / 50.0);
  double lo = 1, hi = -1;
  for (double v : w.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= -a);
  CHECK(hi <= a);
  CHECK(hi - lo > a);
  CHECK(w.requires_grad());
}
