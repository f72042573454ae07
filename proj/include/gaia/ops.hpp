#pragma once

#include <cstdint>
#include <vector>

#include "gaia/tensor.hpp"

// Differentiable tensor operations. Every op records a tape node when any
// input requires grad and recording is enabled.
namespace gaia::ops {

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T -> [m x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Length-preserving causal 1D convolution over rows. x: [T x C_in],
// kernel: [k x C_in x C_out]. Output row t sees input rows t-k+1..t; rows
// before 0 are zero. Tap k-1 multiplies the current row.
Tensor conv1d_causal(const Tensor& x, const Tensor& kernel);

// Row softmax of logits + mask, where mask cells are 0 or -inf.
Tensor softmax_masked(const Tensor& logits, const Tensor& mask);
// [T x T] mask with -inf strictly above the diagonal.
Tensor causal_mask(std::size_t t);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// a: [R x C] plus a row vector b of C elements broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a times a differentiable one-element tensor s.
Tensor mul_scalar(const Tensor& a, const Tensor& s);

Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
// [1 x C] -> [n x C]
Tensor repeat_rows(const Tensor& row, std::size_t n);
Tensor reshape(const Tensor& a, Shape shape);

// Element at flat index as a one-element tensor.
Tensor pick(const Tensor& a, std::size_t index);
Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
// Mean of squared differences over all cells.
Tensor mse_loss(const Tensor& pred, const Tensor& truth);

}  // namespace gaia::ops

namespace gaia {

// Records the on/off pattern of every relu evaluated on this thread while
// armed. The gradient checker uses it to detect finite-difference stencils
// that straddle a kink.
struct KinkProbe {
  bool armed = false;
  std::uint64_t pattern_hash = 0;
  std::size_t exact_zeros = 0;

  void reset() {
    pattern_hash = 1469598103934665603ULL;
    exact_zeros = 0;
  }
  static KinkProbe& current();
};

}  // namespace gaia
