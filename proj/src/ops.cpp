#include "gaia/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "gaia/errors.hpp"

namespace gaia {

KinkProbe& KinkProbe::current() {
  thread_local KinkProbe probe;
  return probe;
}

}  // namespace gaia

namespace gaia::ops {
namespace {

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current().recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

[[maybe_unused]] bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Debug-build guard: finite inputs must never produce non-finite outputs.
void check_finite([[maybe_unused]] const Tensor& out,
                  [[maybe_unused]] std::initializer_list<const Tensor*> inputs) {
#ifndef NDEBUG
  bool inputs_finite = std::all_of(inputs.begin(), inputs.end(),
                                   [](const Tensor* t) { return all_finite(t->data()); });
  assert(!inputs_finite || all_finite(out.data()));
#endif
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, std::string_view name, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Tensor y(x.shape(), std::move(out));
  check_finite(y, {&x});
  if (needs_tape({&x})) {
    y.set_requires_grad(true);
    Tape::current().record({name, {x}, y, [x, y, deriv]() mutable {
                              auto gy = y.grad();
                              auto gx = x.grad_buffer();
                              auto xv = x.data();
                              auto yv = y.data();
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                gx[i] += gy[i] * deriv(xv[i], yv[i]);
                              }
                            }});
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  Tensor c({m, n}, std::move(out));
  check_finite(c, {&a, &b});
  if (needs_tape({&a, &b})) {
    c.set_requires_grad(true);
    Tape::current().record({"matmul", {a, b}, c, [a, b, c, m, k, n]() mutable {
                              auto gc = c.grad();
                              if (a.requires_grad()) {
                                // dA = dC . B^T
                                auto ga = a.grad_buffer();
                                auto bv = b.data();
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t p = 0; p < k; ++p) {
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < n; ++j)
                                      acc += gc[i * n + j] * bv[p * n + j];
                                    ga[i * k + p] += acc;
                                  }
                              }
                              if (b.requires_grad()) {
                                // dB = A^T . dC
                                auto gb = b.grad_buffer();
                                auto av = a.data();
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t p = 0; p < k; ++p) {
                                    const double s = av[i * k + p];
                                    if (s == 0.0) continue;
                                    for (std::size_t j = 0; j < n; ++j)
                                      gb[p * n + j] += s * gc[i * n + j];
                                  }
                              }
                            }});
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  Tensor c({m, n}, std::move(out));
  check_finite(c, {&a, &b});
  if (needs_tape({&a, &b})) {
    c.set_requires_grad(true);
    Tape::current().record({"matmul_nt", {a, b}, c, [a, b, c, m, k, n]() mutable {
                              auto gc = c.grad();
                              auto av = a.data();
                              auto bv = b.data();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) {
                                    const double g = gc[i * n + j];
                                    if (g == 0.0) continue;
                                    for (std::size_t p = 0; p < k; ++p)
                                      ga[i * k + p] += g * bv[j * k + p];
                                  }
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) {
                                    const double g = gc[i * n + j];
                                    if (g == 0.0) continue;
                                    for (std::size_t p = 0; p < k; ++p)
                                      gb[j * k + p] += g * av[i * k + p];
                                  }
                              }
                            }});
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tensor t({n, m}, std::move(out));
  if (needs_tape({&a})) {
    t.set_requires_grad(true);
    Tape::current().record({"transpose", {a}, t, [a, t, m, n]() mutable {
                              auto gt = t.grad();
                              auto ga = a.grad_buffer();
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j)
                                  ga[i * n + j] += gt[j * m + i];
                            }});
  }
  return t;
}

Tensor conv1d_causal(const Tensor& x, const Tensor& kernel) {
  require_matrix(x, "conv1d_causal");
  if (kernel.ndim() != 3) {
    throw DimensionError("conv1d_causal: kernel must be [k x C_in x C_out], got " +
                         shape_str(kernel.shape()));
  }
  const std::size_t t_len = x.rows(), cin = x.cols();
  const std::size_t k = kernel.dim(0), cout = kernel.dim(2);
  if (k == 0) throw DimensionError("conv1d_causal: kernel width must be >= 1");
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv1d_causal: channel mismatch, input " + shape_str(x.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
  }
  std::vector<double> out(t_len * cout, 0.0);
  auto xv = x.data();
  auto wv = kernel.data();
  for (std::size_t t = 0; t < t_len; ++t) {
    double* orow = out.data() + t * cout;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t back = k - 1 - j;
      if (back > t) continue;
      const double* xrow = xv.data() + (t - back) * cin;
      const double* wtap = wv.data() + j * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double s = xrow[c];
        if (s == 0.0) continue;
        const double* w = wtap + c * cout;
        for (std::size_t o = 0; o < cout; ++o) orow[o] += s * w[o];
      }
    }
  }
  Tensor y({t_len, cout}, std::move(out));
  check_finite(y, {&x, &kernel});
  if (needs_tape({&x, &kernel})) {
    y.set_requires_grad(true);
    Tape::current().record(
        {"conv1d_causal", {x, kernel}, y, [x, kernel, y, t_len, cin, cout, k]() mutable {
           auto gy = y.grad();
           auto xv = x.data();
           auto wv = kernel.data();
           std::span<double> gx, gw;
           if (x.requires_grad()) gx = x.grad_buffer();
           if (kernel.requires_grad()) gw = kernel.grad_buffer();
           for (std::size_t t = 0; t < t_len; ++t) {
             const double* grow = gy.data() + t * cout;
             for (std::size_t j = 0; j < k; ++j) {
               const std::size_t back = k - 1 - j;
               if (back > t) continue;
               const std::size_t s = t - back;
               for (std::size_t c = 0; c < cin; ++c) {
                 const std::size_t wbase = (j * cin + c) * cout;
                 if (!gx.empty()) {
                   double acc = 0.0;
                   for (std::size_t o = 0; o < cout; ++o) acc += grow[o] * wv[wbase + o];
                   gx[s * cin + c] += acc;
                 }
                 if (!gw.empty()) {
                   const double xs = xv[s * cin + c];
                   if (xs == 0.0) continue;
                   for (std::size_t o = 0; o < cout; ++o) gw[wbase + o] += xs * grow[o];
                 }
               }
             }
           }
         }});
  }
  return y;
}

Tensor softmax_masked(const Tensor& logits, const Tensor& mask) {
  require_matrix(logits, "softmax_masked");
  require_same_shape(logits, mask, "softmax_masked");
  const std::size_t r = logits.rows(), c = logits.cols();
  std::vector<double> out(r * c, 0.0);
  auto lv = logits.data();
  auto mv = mask.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (std::isinf(mv[i * c + j])) continue;
      mx = std::max(mx, lv[i * c + j] + mv[i * c + j]);
    }
    if (std::isinf(mx)) {
      throw DegenerateMaskError("softmax_masked: row " + std::to_string(i) +
                                " has no unmasked entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (std::isinf(mv[i * c + j])) continue;
      const double e = std::exp(lv[i * c + j] + mv[i * c + j] - mx);
      out[i * c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor y(logits.shape(), std::move(out));
  check_finite(y, {&logits});
  if (needs_tape({&logits})) {
    y.set_requires_grad(true);
    Tape::current().record({"softmax_masked", {logits}, y, [logits, y, r, c]() mutable {
                              auto gy = y.grad();
                              auto yv = y.data();
                              auto gl = logits.grad_buffer();
                              for (std::size_t i = 0; i < r; ++i) {
                                double inner = 0.0;
                                for (std::size_t j = 0; j < c; ++j)
                                  inner += gy[i * c + j] * yv[i * c + j];
                                for (std::size_t j = 0; j < c; ++j)
                                  gl[i * c + j] += yv[i * c + j] * (gy[i * c + j] - inner);
                              }
                            }});
  }
  return y;
}

Tensor causal_mask(std::size_t t) {
  std::vector<double> m(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) m[i * t + j] = -std::numeric_limits<double>::infinity();
  return Tensor({t, t}, std::move(m));
}

Tensor relu(const Tensor& x) {
  auto& probe = KinkProbe::current();
  if (probe.armed) {
    for (double v : x.data()) {
      probe.pattern_hash = (probe.pattern_hash ^ static_cast<std::uint64_t>(v > 0.0)) *
                           1099511628211ULL;
      if (v == 0.0) ++probe.exact_zeros;
    }
  }
  // Subgradient at 0 is 0.
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  Tensor y(a.shape(), std::move(out));
  check_finite(y, {&a, &b});
  if (needs_tape({&a, &b})) {
    y.set_requires_grad(true);
    Tape::current().record({"hadamard", {a, b}, y, [a, b, y]() mutable {
                              auto gy = y.grad();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                auto bv = b.data();
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                auto av = a.data();
                                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
                              }
                            }});
  }
  return y;
}

namespace {
Tensor add_scaled(const Tensor& a, const Tensor& b, double sb, std::string_view name) {
  require_same_shape(a, b, name.data());
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + sb * bv[i];
  Tensor y(a.shape(), std::move(out));
  check_finite(y, {&a, &b});
  if (needs_tape({&a, &b})) {
    y.set_requires_grad(true);
    Tape::current().record({name, {a, b}, y, [a, b, y, sb]() mutable {
                              auto gy = y.grad();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sb * gy[i];
                              }
                            }});
  }
  return y;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled(a, b, -1.0, "sub"); }

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_matrix(a, "add_rowvec");
  const std::size_t r = a.rows(), c = a.cols();
  if (b.numel() != c) {
    throw DimensionError("add_rowvec: row vector " + shape_str(b.shape()) +
                         " does not match matrix " + shape_str(a.shape()));
  }
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + bv[j];
  Tensor y(a.shape(), std::move(out));
  check_finite(y, {&a, &b});
  if (needs_tape({&a, &b})) {
    y.set_requires_grad(true);
    Tape::current().record({"add_rowvec", {a, b}, y, [a, b, y, r, c]() mutable {
                              auto gy = y.grad();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
                              }
                            }});
  }
  return y;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("mul_scalar: expected a one-element factor, got " + shape_str(s.shape()));
  }
  const double f = s[0];
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * f;
  Tensor y(a.shape(), std::move(out));
  check_finite(y, {&a, &s});
  if (needs_tape({&a, &s})) {
    y.set_requires_grad(true);
    Tape::current().record({"mul_scalar", {a, s}, y, [a, s, y]() mutable {
                              auto gy = y.grad();
                              auto av = a.data();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                const double f = s[0];
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * f;
                              }
                              if (s.requires_grad()) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < av.size(); ++i) acc += gy[i] * av[i];
                                s.grad_buffer()[0] += acc;
                              }
                            }});
  }
  return y;
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_lastdim: no inputs");
  for (const auto& p : parts) require_matrix(p, "concat_lastdim");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_lastdim: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    auto pv = p.data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * c, c, out.data() + i * total + offset);
    offset += c;
  }
  Tensor y({r, total}, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && Tape::current().recording()) {
    y.set_requires_grad(true);
    Tape::current().record({"concat_lastdim", parts, y, [parts, y, r, total]() mutable {
                              auto gy = y.grad();
                              std::size_t offset = 0;
                              for (auto& p : parts) {
                                const std::size_t c = p.cols();
                                if (p.requires_grad()) {
                                  auto gp = p.grad_buffer();
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      gp[i * c + j] += gy[i * total + offset + j];
                                }
                                offset += c;
                              }
                            }});
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  for (const auto& p : parts) require_matrix(p, "concat_rows");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y({total, c}, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && Tape::current().recording()) {
    y.set_requires_grad(true);
    Tape::current().record({"concat_rows", parts, y, [parts, y]() mutable {
                              auto gy = y.grad();
                              std::size_t offset = 0;
                              for (auto& p : parts) {
                                if (p.requires_grad()) {
                                  auto gp = p.grad_buffer();
                                  for (std::size_t i = 0; i < gp.size(); ++i)
                                    gp[i] += gy[offset + i];
                                }
                                offset += p.numel();
                              }
                            }});
  }
  return y;
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  const std::size_t c = row.numel();
  if (row.ndim() == 2 && row.rows() != 1) {
    throw DimensionError("repeat_rows: expected a single row, got " + shape_str(row.shape()));
  }
  std::vector<double> out(n * c);
  auto rv = row.data();
  for (std::size_t i = 0; i < n; ++i) std::copy(rv.begin(), rv.end(), out.begin() + i * c);
  Tensor y({n, c}, std::move(out));
  if (needs_tape({&row})) {
    y.set_requires_grad(true);
    Tape::current().record({"repeat_rows", {row}, y, [row, y, n, c]() mutable {
                              auto gy = y.grad();
                              auto gr = row.grad_buffer();
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < c; ++j) gr[j] += gy[i * c + j];
                            }});
  }
  return y;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  Tensor y(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (needs_tape({&a})) {
    y.set_requires_grad(true);
    Tape::current().record({"reshape", {a}, y, [a, y]() mutable {
                              auto gy = y.grad();
                              auto ga = a.grad_buffer();
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                            }});
  }
  return y;
}

Tensor pick(const Tensor& a, std::size_t index) {
  if (index >= a.numel()) {
    throw DimensionError("pick: index " + std::to_string(index) + " outside " +
                         shape_str(a.shape()));
  }
  Tensor y({1, 1}, std::vector<double>{a[index]});
  if (needs_tape({&a})) {
    y.set_requires_grad(true);
    Tape::current().record({"pick", {a}, y, [a, y, index]() mutable {
                              a.grad_buffer()[index] += y.grad()[0];
                            }});
  }
  return y;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor y({1, 1}, std::vector<double>{acc});
  if (needs_tape({&a})) {
    y.set_requires_grad(true);
    Tape::current().record({"sum", {a}, y, [a, y]() mutable {
                              const double g = y.grad()[0];
                              for (double& ga : a.grad_buffer()) ga += g;
                            }});
  }
  return y;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: size mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  auto av = a.data();
  auto bv = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Tensor y({1, 1}, std::vector<double>{acc});
  if (needs_tape({&a, &b})) {
    y.set_requires_grad(true);
    Tape::current().record({"dot", {a, b}, y, [a, b, y]() mutable {
                              const double g = y.grad()[0];
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                auto bv = b.data();
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                auto av = a.data();
                                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
                              }
                            }});
  }
  return y;
}

Tensor mse_loss(const Tensor& pred, const Tensor& truth) {
  require_same_shape(pred, truth, "mse_loss");
  const std::size_t n = pred.numel();
  if (n == 0) throw DimensionError("mse_loss: empty input");
  auto pv = pred.data();
  auto tv = truth.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  Tensor y({1, 1}, std::vector<double>{acc / static_cast<double>(n)});
  if (needs_tape({&pred, &truth})) {
    y.set_requires_grad(true);
    Tape::current().record({"mse_loss", {pred, truth}, y, [pred, truth, y, n]() mutable {
                              const double g = y.grad()[0] * 2.0 / static_cast<double>(n);
                              auto pv = pred.data();
                              auto tv = truth.data();
                              if (pred.requires_grad()) {
                                auto gp = pred.grad_buffer();
                                for (std::size_t i = 0; i < n; ++i) gp[i] += g * (pv[i] - tv[i]);
                              }
                              if (truth.requires_grad()) {
                                auto gt = truth.grad_buffer();
                                for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (pv[i] - tv[i]);
                              }
                            }});
  }
  return y;
}

}  // namespace gaia::ops
