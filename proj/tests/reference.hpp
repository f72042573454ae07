#pragma once

// Slow loop-based reference implementations. Nothing here touches the tape
// or the library's ops; inputs are plain nested vectors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ref {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;
// Kernel [k][c_in][c_out]; tap k-1 multiplies the current row.
using Kernel = std::vector<Mat>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0)); }

inline Mat conv(const Mat& x, const Kernel& w) {
  const std::size_t T = x.size(), k = w.size(), cout = w[0][0].size();
  Mat y = zeros(T, cout);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        // tap j reads row t - (k-1-j); rows before 0 are zero padding
        const long src = static_cast<long>(t) - static_cast<long>(k - 1 - j);
        if (src < 0) continue;
        for (std::size_t c = 0; c < x[0].size(); ++c) acc += x[src][c] * w[j][c][o];
      }
      y[t][o] = acc;
    }
  return y;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat y = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) y[i][j] += b[i][j];
  return y;
}

inline Mat scaled(const Mat& a, double s) {
  Mat y = a;
  for (auto& r : y)
    for (auto& v : r) v *= s;
  return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-wise causal softmax via log-sum-exp.
inline Mat causal_softmax(const Mat& logits) {
  Mat y = zeros(logits.size(), logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) m = std::max(m, logits[i][j]);
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += std::exp(logits[i][j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j <= i; ++j) y[i][j] = std::exp(logits[i][j] - lse);
  }
  return y;
}

struct Ffl {
  Vec w_I, b_I;
  Mat W_T, b_T, W_S;
  Vec b_S;
  Mat W_F, b_F;
};

// s_t = W_F [z_t w_I + b_I ; W_T f_t + b_T,t ; W_S sf + b_S] + b_F,t
inline Mat ffl(const Ffl& p, const Vec& z, const Mat& tf, const Vec& sf) {
  const std::size_t T = z.size(), C = p.w_I.size();
  Vec fs(C);
  for (std::size_t c = 0; c < C; ++c) {
    fs[c] = p.b_S[c];
    for (std::size_t d = 0; d < sf.size(); ++d) fs[c] += p.W_S[c][d] * sf[d];
  }
  Mat s = zeros(T, C);
  for (std::size_t t = 0; t < T; ++t) {
    Vec cat;
    for (std::size_t c = 0; c < C; ++c) cat.push_back(z[t] * p.w_I[c] + p.b_I[c]);
    for (std::size_t c = 0; c < C; ++c) {
      double v = p.b_T[t][c];
      for (std::size_t d = 0; d < tf[t].size(); ++d) v += p.W_T[c][d] * tf[t][d];
      cat.push_back(v);
    }
    for (std::size_t c = 0; c < C; ++c) cat.push_back(fs[c]);
    for (std::size_t c = 0; c < C; ++c) {
      double v = p.b_F[t][c];
      for (std::size_t j = 0; j < 3 * C; ++j) v += p.W_F[c][j] * cat[j];
      s[t][c] = v;
    }
  }
  return s;
}

inline Mat tel(const std::vector<Kernel>& capture, const std::vector<Kernel>& denoise,
               const Mat& s) {
  const std::size_t T = s.size();
  Mat e = zeros(T, 0);
  for (std::size_t g = 0; g < capture.size(); ++g) {
    const Mat c = conv(s, capture[g]);
    const Mat d = conv(s, denoise[g]);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < c[t].size(); ++o)
        e[t].push_back(std::max(0.0, c[t][o]) * sigmoid(d[t][o]));
  }
  return e;
}

struct Cau {
  Kernel q, k, v;
};

inline Mat cau(const Cau& p, const Mat& hu, const Mat& hv, Mat* attn = nullptr) {
  const std::size_t T = hu.size(), C = hu[0].size();
  const Mat Q = conv(hu, p.q), K = conv(hv, p.k), V = conv(hv, p.v);
  Mat logits = zeros(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < C; ++c) d += Q[i][c] * K[j][c];
      logits[i][j] = d / std::sqrt(static_cast<double>(C));
    }
  const Mat a = causal_softmax(logits);
  if (attn) *attn = a;
  Mat out = zeros(T, V[0].size());
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t c = 0; c < V[0].size(); ++c) out[i][c] += a[i][j] * V[j][c];
  return out;
}

struct Layer {
  Cau inter, intra;
  Vec mu;
  Kernel src, dst;  // [1][C][1]
  Vec rel;
};

struct InEdge {
  std::size_t src;
  std::size_t rel;
};

inline double logit(const Layer& p, const Mat& hu, const Mat& hv, std::size_t rel,
                    bool use_rel) {
  const Mat a = conv(hu, p.src), b = conv(hv, p.dst);
  double g = 0.0;
  for (std::size_t t = 0; t < hu.size(); ++t) g += p.mu[t] * std::tanh(a[t][0] + b[t][0]);
  return use_rel ? g + p.rel[rel] : g;
}

// One layer over every node: sum_v alpha_uv cau_inter(h_u, h_v) + cau_intra(h_u, h_u).
inline std::vector<Mat> layer(const Layer& p, const std::vector<std::vector<InEdge>>& in,
                              const std::vector<Mat>& h, bool use_rel = true) {
  std::vector<Mat> out;
  for (std::size_t u = 0; u < h.size(); ++u) {
    Mat acc = cau(p.intra, h[u], h[u]);
    if (!in[u].empty()) {
      Vec g;
      for (const auto& e : in[u]) g.push_back(logit(p, h[u], h[e.src], e.rel, use_rel));
      const double m = *std::max_element(g.begin(), g.end());
      double z = 0.0;
      for (double x : g) z += std::exp(x - m);
      for (std::size_t i = 0; i < in[u].size(); ++i) {
        const double alpha = std::exp(g[i] - m) / z;
        acc = add(acc, scaled(cau(p.inter, h[u], h[in[u][i].src]), alpha));
      }
    }
    out.push_back(acc);
  }
  return out;
}

struct Head {
  Kernel lp;  // [1][C][1]
  Mat W;      // [T][T']
  Vec b;
};

inline Vec head(const Head& p, const Mat& hl, const Mat& e) {
  const std::size_t T = hl.size();
  Vec col(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < hl[t].size(); ++c) col[t] += (hl[t][c] + e[t][c]) * p.lp[0][c][0];
  Vec y(p.b.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    double v = p.b[k];
    for (std::size_t t = 0; t < T; ++t) v += col[t] * p.W[t][k];
    y[k] = std::max(0.0, v);
  }
  return y;
}

struct Metrics {
  double mae, rmse, mape;
  std::size_t excluded;
};

// Single pass over (pred, truth) pairs.
inline Metrics metrics(const Vec& pred, const Vec& truth, double floor = 1.0) {
  double a = 0, s = 0, p = 0;
  std::size_t np = 0, ex = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    a += std::fabs(d);
    s += d * d;
    if (std::fabs(truth[i]) >= floor) {
      p += std::fabs(d / truth[i]);
      ++np;
    } else {
      ++ex;
    }
  }
  const double n = static_cast<double>(pred.size());
  return {a / n, std::sqrt(s / n), np ? p / static_cast<double>(np) : 0.0, ex};
}

// One Adam update at step t (1-based), in place.
inline void adam_step(Vec& w, Vec& m, Vec& v, const Vec& g, std::size_t t, double lr,
                      double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
    w[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

}  // namespace ref
