#include "gaia/encoder.hpp"

#include <cmath>

#include "gaia/errors.hpp"
#include "gaia/ops.hpp"

namespace gaia {

Tensor xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                      bool requires_grad) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor(shape, std::move(v), requires_grad);
}

FFLParams init_ffl(std::size_t t_max, std::size_t channels, std::size_t d_temporal,
                   std::size_t d_static, Rng& rng) {
  const std::size_t c = channels;
  FFLParams p;
  p.w_I = xavier_uniform({c}, 1, c, rng);
  p.b_I = Tensor({c}, true);
  p.W_T = xavier_uniform({c, d_temporal}, d_temporal, c, rng);
  p.b_T = Tensor({t_max, c}, true);
  p.W_S = xavier_uniform({c, d_static}, d_static, c, rng);
  p.b_S = Tensor({c}, true);
  p.W_F = xavier_uniform({c, 3 * c}, 3 * c, c, rng);
  p.b_F = Tensor({t_max, c}, true);
  return p;
}

RawProjectionParams init_raw_projection(std::size_t channels, std::size_t d_temporal,
                                        std::size_t d_static, Rng& rng) {
  const std::size_t in = 1 + d_temporal + d_static;
  return {xavier_uniform({channels, in}, in, channels, rng), Tensor({channels}, true)};
}

TELParams init_tel(std::size_t channels, std::size_t groups, Rng& rng) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("TEL needs C divisible by K (C=" + std::to_string(channels) +
                      ", K=" + std::to_string(groups) + ")");
  }
  const std::size_t out = channels / groups;
  TELParams p;
  for (std::size_t k = 1; k <= groups; ++k) {
    const std::size_t width = std::size_t{1} << k;
    p.capture.push_back(xavier_uniform({width, channels, out}, width * channels, width * out, rng));
  }
  for (std::size_t k = 1; k <= groups; ++k) {
    const std::size_t width = std::size_t{1} << k;
    p.denoise.push_back(xavier_uniform({width, channels, out}, width * channels, width * out, rng));
  }
  return p;
}

TELParams init_tel_single(std::size_t channels, std::size_t width, Rng& rng) {
  TELParams p;
  p.capture.push_back(
      xavier_uniform({width, channels, channels}, width * channels, width * channels, rng));
  p.denoise.push_back(
      xavier_uniform({width, channels, channels}, width * channels, width * channels, rng));
  return p;
}

namespace {

Tensor as_column(const Tensor& gmv) {
  if (gmv.ndim() == 2 && gmv.cols() == 1) return gmv;
  if (gmv.ndim() != 1) {
    throw DimensionError("GMV series must be [T] or [T x 1], got " + shape_str(gmv.shape()));
  }
  return ops::reshape(gmv, {gmv.numel(), 1});
}

Tensor as_row(const Tensor& v) {
  if (v.ndim() == 2 && v.rows() == 1) return v;
  if (v.ndim() != 1) {
    throw DimensionError("expected a vector, got " + shape_str(v.shape()));
  }
  return ops::reshape(v, {1, v.numel()});
}

}  // namespace

Tensor ffl_forward(const FFLParams& p, const Tensor& gmv, const Tensor& tf, const Tensor& sf) {
  const Tensor z = as_column(gmv);
  const std::size_t t_len = z.rows();
  if (tf.ndim() != 2 || tf.rows() != t_len || tf.cols() != p.W_T.dim(1)) {
    throw DimensionError("ffl_forward: temporal features " + shape_str(tf.shape()) +
                         " do not match T=" + std::to_string(t_len) + ", W_T " +
                         shape_str(p.W_T.shape()));
  }
  if (p.b_T.dim(0) != t_len) {
    throw DimensionError("ffl_forward: series length " + std::to_string(t_len) +
                         " does not match per-timestep bias " + shape_str(p.b_T.shape()));
  }
  const Tensor s_row = as_row(sf);
  if (s_row.cols() != p.W_S.dim(1)) {
    throw DimensionError("ffl_forward: static features " + shape_str(sf.shape()) +
                         " do not match W_S " + shape_str(p.W_S.shape()));
  }

  const Tensor z_lift = ops::add_rowvec(ops::matmul(z, as_row(p.w_I)), p.b_I);
  const Tensor f_temporal = ops::add(ops::matmul_nt(tf, p.W_T), p.b_T);
  const Tensor f_static = ops::add_rowvec(ops::matmul_nt(s_row, p.W_S), p.b_S);
  const Tensor fused = ops::concat_lastdim({z_lift, f_temporal, ops::repeat_rows(f_static, t_len)});
  return ops::add(ops::matmul_nt(fused, p.W_F), p.b_F);
}

Tensor raw_projection_forward(const RawProjectionParams& p, const Tensor& gmv, const Tensor& tf,
                              const Tensor& sf) {
  const Tensor z = as_column(gmv);
  const Tensor s_row = as_row(sf);
  const Tensor raw = ops::concat_lastdim({z, tf, ops::repeat_rows(s_row, z.rows())});
  if (raw.cols() != p.W.dim(1)) {
    throw DimensionError("raw_projection_forward: inputs " + shape_str(raw.shape()) +
                         " do not match W " + shape_str(p.W.shape()));
  }
  return ops::add_rowvec(ops::matmul_nt(raw, p.W), p.b);
}

Tensor tel_forward(const TELParams& p, const Tensor& s) {
  if (p.capture.empty() || p.capture.size() != p.denoise.size()) {
    throw DimensionError("tel_forward: capture/denoise groups must be non-empty and paired");
  }
  std::size_t out_channels = 0;
  for (const auto& k : p.capture) out_channels += k.dim(2);
  if (out_channels != s.cols()) {
    throw DimensionError("tel_forward: kernel groups produce " + std::to_string(out_channels) +
                         " channels, input has " + std::to_string(s.cols()));
  }
  auto run = [&s](const std::vector<Tensor>& kernels) {
    if (kernels.size() == 1) return ops::conv1d_causal(s, kernels.front());
    std::vector<Tensor> parts;
    parts.reserve(kernels.size());
    for (const auto& k : kernels) parts.push_back(ops::conv1d_causal(s, k));
    return ops::concat_lastdim(parts);
  };
  return ops::hadamard(ops::relu(run(p.capture)), ops::sigmoid(run(p.denoise)));
}

}  // namespace gaia
