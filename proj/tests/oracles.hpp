#pragma once

// Independent plain-loop re-implementations used as test oracles. They read
// parameter values but share no code with the tape-based model.

#include <cmath>
#include <limits>
#include <vector>

#include "atomic_sm/encoders.hpp"
#include "atomic_sm/gat.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat to_mat(const atomic_sm::ad::Tensor& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

struct LstmResult {
  Vec encoding;
  Vec attention;
  Mat hidden;
};

// One sequence through the LSTM (gates i, f, g, o) and temporal attention, step by step.
inline LstmResult lstm_attention(const Mat& seq, const atomic_sm::model::TemporalEncoderParams& p) {
  const std::size_t h = p.hidden_size(), in = p.input_size();
  Vec hs(h, 0.0), cs(h, 0.0);
  LstmResult r;
  for (const Vec& x : seq) {
    Vec z(4 * h);
    for (std::size_t k = 0; k < 4 * h; ++k) {
      double acc = p.bias[k];
      for (std::size_t a = 0; a < in; ++a) acc += x[a] * p.w_input.at(a, k);
      for (std::size_t a = 0; a < h; ++a) acc += hs[a] * p.w_hidden.at(a, k);
      z[k] = acc;
    }
    Vec next(h);
    for (std::size_t k = 0; k < h; ++k) {
      const double i = sigmoid(z[k]);
      const double f = sigmoid(z[h + k]);
      const double g = std::tanh(z[2 * h + k]);
      const double o = sigmoid(z[3 * h + k]);
      cs[k] = f * cs[k] + i * g;
      next[k] = o * std::tanh(cs[k]);
    }
    hs = next;
    r.hidden.push_back(hs);
  }
  Vec logits;
  for (const Vec& hv : r.hidden) {
    double s = 0.0;
    for (std::size_t k = 0; k < h; ++k) s += hv[k] * p.attention[k];
    logits.push_back(s);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - mx));
  r.attention = logits;
  for (double& b : r.attention) b /= total;
  r.encoding.assign(h, 0.0);
  for (std::size_t t = 0; t < r.hidden.size(); ++t)
    for (std::size_t k = 0; k < h; ++k) r.encoding[k] += r.attention[t] * r.hidden[t][k];
  return r;
}

// x_k = tanh(sum_i sum_j q_i W[i][k][j] c_j + b_k), triple loop.
inline Vec bilinear(const Vec& q, const Vec& c, const atomic_sm::model::FusionParams& p, bool apply_tanh = true) {
  const std::size_t dh = p.weight.dim(0), df = p.weight.dim(1), dm = p.weight.dim(2);
  Vec x(df);
  for (std::size_t k = 0; k < df; ++k) {
    double s = p.bias[k];
    for (std::size_t i = 0; i < dh; ++i)
      for (std::size_t j = 0; j < dm; ++j) s += q[i] * p.weight[(i * df + k) * dm + j] * c[j];
    x[k] = apply_tanh ? std::tanh(s) : s;
  }
  return x;
}

struct GatResult {
  Mat features;               // N x (H * d_g)
  std::vector<Mat> attention; // per head N x N
};

// Dense formulation: all e_ij computed, non-edges set to -inf, full-row softmax.
inline GatResult gat_dense(const Mat& x, const std::vector<std::vector<bool>>& adj,
                           const atomic_sm::model::GatParams& p) {
  const std::size_t n = x.size(), d = p.head_size();
  GatResult r;
  r.features.assign(n, Vec());
  for (const auto& head : p.heads) {
    Mat wx(n, Vec(d, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t a = 0; a < x[i].size(); ++a) wx[i][k] += x[i][a] * head.projection.at(a, k);
    Mat e(n, Vec(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += head.attention[k] * wx[i][k] + head.attention[d + k] * wx[j][k];
        s = s > 0 ? s : p.negative_slope * s;
        e[i][j] = adj[i][j] ? s : -std::numeric_limits<double>::infinity();
      }
    Mat alpha(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : e[i]) mx = std::max(mx, v);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += (alpha[i][j] = std::exp(e[i][j] - mx));
      for (double& a : alpha[i]) a /= total;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += alpha[i][j] * wx[j][k];
        r.features[i].push_back(s > 0 ? s : std::expm1(s));
      }
    r.attention.push_back(alpha);
  }
  return r;
}

}  // namespace oracle

namespace oracle {

// Best subset of at most k holdings by total realized return, found by trying
// every subset. Returns the equal-weight mean over that subset (0 when empty).
// Among equal totals the smaller subset wins.
inline double best_portfolio_return(const std::vector<double>& returns, std::size_t k) {
  const std::size_t n = returns.size();
  double best_total = 0.0;
  std::size_t best_size = 0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::size_t size = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) {
        ++size;
        total += returns[i];
      }
    if (size > k) continue;
    if (total > best_total || (total == best_total && size < best_size)) {
      best_total = total;
      best_size = size;
    }
  }
  return best_size == 0 ? 0.0 : best_total / static_cast<double>(best_size);
}

}  // namespace oracle
