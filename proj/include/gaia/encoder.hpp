#pragma once

#include <vector>

#include "gaia/rng.hpp"
#include "gaia/tensor.hpp"

namespace gaia {

// Feature fusion: per-timestep projections of GMV, temporal and static
// features to C channels, concatenated and mixed by a fully connected layer.
struct FFLParams {
  Tensor w_I;  // [C]      scalar GMV lift
  Tensor b_I;  // [C]
  Tensor W_T;  // [C x D_T]
  Tensor b_T;  // [T x C]  one bias row per timestep
  Tensor W_S;  // [C x D_S]
  Tensor b_S;  // [C]
  Tensor W_F;  // [C x 3C]
  Tensor b_F;  // [T x C]
};

// Fallback used when feature fusion is ablated: the raw inputs are
// concatenated and projected once with a single shared bias.
struct RawProjectionParams {
  Tensor W;  // [C x (1 + D_T + D_S)]
  Tensor b;  // [C]
};

// Coupled capture/denoise convolution groups. Group k holds a
// [width_k x C x C/K] kernel; the default widths are 2, 4, ..., 2^K.
struct TELParams {
  std::vector<Tensor> capture;
  std::vector<Tensor> denoise;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                      bool requires_grad = true);

FFLParams init_ffl(std::size_t t_max, std::size_t channels, std::size_t d_temporal,
                   std::size_t d_static, Rng& rng);
RawProjectionParams init_raw_projection(std::size_t channels, std::size_t d_temporal,
                                        std::size_t d_static, Rng& rng);
TELParams init_tel(std::size_t channels, std::size_t groups, Rng& rng);
// The single {4 x C; C} capture/denoise pair.
TELParams init_tel_single(std::size_t channels, std::size_t width, Rng& rng);

// gmv: [T] or [T x 1], tf: [T x D_T], sf: [D_S] or [1 x D_S] -> S: [T x C]
Tensor ffl_forward(const FFLParams& p, const Tensor& gmv, const Tensor& tf, const Tensor& sf);
Tensor raw_projection_forward(const RawProjectionParams& p, const Tensor& gmv, const Tensor& tf,
                              const Tensor& sf);

// S: [T x C] -> E = relu(S^C) * sigmoid(S^D), [T x C]
Tensor tel_forward(const TELParams& p, const Tensor& s);

}  // namespace gaia
