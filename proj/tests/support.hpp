#pragma once

#include <vector>

#include "gaia/rng.hpp"
#include "gaia/tensor.hpp"
#include "reference.hpp"

namespace testing_support {

inline gaia::Tensor random_tensor(gaia::Shape shape, gaia::Rng& rng, double lo = -1.0,
                                  double hi = 1.0, bool requires_grad = false) {
  std::vector<double> d(gaia::shape_numel(shape));
  for (double& v : d) v = rng.uniform(lo, hi);
  return gaia::Tensor(std::move(shape), std::move(d), requires_grad);
}

inline ref::Vec to_vec(const gaia::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline ref::Mat to_mat(const gaia::Tensor& t) {
  ref::Mat m(t.dim(0), ref::Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  return m;
}

inline ref::Kernel to_kernel(const gaia::Tensor& t) {
  const std::size_t k = t.dim(0), ci = t.dim(1), co = t.dim(2);
  ref::Kernel w(k, ref::Mat(ci, ref::Vec(co)));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < ci; ++b)
      for (std::size_t c = 0; c < co; ++c) w[a][b][c] = t[(a * ci + b) * co + c];
  return w;
}

inline double max_abs_diff(const ref::Mat& a, const gaia::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      m = std::max(m, std::abs(a[i][j] - b[i * a[i].size() + j]));
  return m;
}

inline double max_abs_diff(const ref::Vec& a, const gaia::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing_support
