// Softmax self-attention with optional residual connections, plus the Res and
// theta-balance diagnostics used to measure distance from rank one.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnlab/linalg.hpp"

namespace attnlab {

inline constexpr double kExpOverflowGuard = 700.0;

/// <exp(x), 1>, without stabilization.
inline double alpha(std::span<const double> x) {
  if (x.empty()) throw Error("alpha: empty vector");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw Error("alpha: non-finite entry at index " + std::to_string(i));
    if (x[i] > kExpOverflowGuard)
      throw Error("alpha: entry " + std::to_string(i) + " exceeds the exp overflow guard");
    s += std::exp(x[i]);
  }
  return s;
}

/// Softmax with max subtraction.
inline Vec softmax_vec(std::span<const double> x) {
  if (x.empty()) throw Error("softmax_vec: empty vector");
  double m = x[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw Error("softmax_vec: non-finite entry at index " + std::to_string(i));
    m = std::max(m, x[i]);
  }
  Vec p(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = std::exp(x[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

inline Mat softmax_rows(const Mat& a) {
  Mat p(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Vec r = softmax_vec(a.row(i));
    std::copy(r.begin(), r.end(), p.row(i).begin());
  }
  return p;
}

/// Minimizer y of ||Z - 1 y^T||_inf. Columns decouple under the entrywise sup
/// norm and each column's minimizer is the midpoint of its range.
inline Vec res_offset(const Mat& z) {
  Vec y(z.cols());
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double lo = z(0, j), hi = z(0, j);
    for (std::size_t i = 1; i < z.rows(); ++i) {
      lo = std::min(lo, z(i, j));
      hi = std::max(hi, z(i, j));
    }
    y[j] = 0.5 * (lo + hi);
  }
  return y;
}

inline Mat res(const Mat& z) {
  const Vec y = res_offset(z);
  Mat r = z;
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) r(i, j) -= y[j];
  return r;
}

/// max_i (max_j E_ij - min_j E_ij)
inline double theta_balance(const Mat& e) {
  if (!e.square()) throw Error("theta_balance: expected a square matrix, got " + e.shape());
  double theta = 0.0;
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const auto r = e.row(i);
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    theta = std::max(theta, *hi - *lo);
  }
  return theta;
}

struct HeadWeights {
  Mat Wq;
  Mat Wk;
  Mat Wv;
  std::optional<Vec> bq;
  std::optional<Vec> bk;

  std::size_t dim() const noexcept { return Wq.rows(); }

  void validate(std::size_t d) const {
    for (const auto* w : {&Wq, &Wk, &Wv})
      if (w->rows() != d || w->cols() != d)
        throw Error("HeadWeights: expected " + shape_str(d, d) + " weights, got " + w->shape());
    if (bq && bq->size() != d) throw Error("HeadWeights: bq length " + std::to_string(bq->size()) + " != d");
    if (bk && bk->size() != d) throw Error("HeadWeights: bk length " + std::to_string(bk->size()) + " != d");
  }

  double max_weight_norm() const noexcept { return std::max({norm_inf(Wq), norm_inf(Wk), norm_inf(Wv)}); }

  friend bool operator==(const HeadWeights&, const HeadWeights&) = default;
};

struct LayerSpec {
  std::vector<HeadWeights> heads;
  bool residual = true;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Score scaling: either 1/sqrt(d) or an explicit positive value.
struct Beta {
  enum class Mode { InvSqrtD, Explicit };
  Mode mode = Mode::InvSqrtD;
  double value = 0.0;

  static Beta inv_sqrt_d() { return {}; }
  static Beta explicit_value(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("Beta: explicit value must be finite and > 0");
    return {Mode::Explicit, v};
  }

  double resolve(std::size_t d) const {
    return mode == Mode::InvSqrtD ? 1.0 / std::sqrt(static_cast<double>(d)) : value;
  }

  friend bool operator==(const Beta&, const Beta&) = default;
};

struct NetworkSpec {
  std::size_t d = 0;
  std::vector<LayerSpec> layers;
  Beta beta;

  std::size_t depth() const noexcept { return layers.size(); }
  double resolved_beta() const { return beta.resolve(d); }

  std::size_t max_heads() const noexcept {
    std::size_t h = 0;
    for (const auto& l : layers) h = std::max(h, l.heads.size());
    return h;
  }

  double max_weight_norm() const noexcept {
    double m = 0.0;
    for (const auto& l : layers)
      for (const auto& h : l.heads) m = std::max(m, h.max_weight_norm());
    return m;
  }

  bool all_residual() const noexcept {
    return std::all_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.residual; });
  }
  bool none_residual() const noexcept {
    return std::none_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.residual; });
  }

  void validate() const {
    if (d == 0) throw Error("NetworkSpec: d must be positive");
    if (layers.empty()) throw Error("NetworkSpec: at least one layer is required");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].heads.empty()) throw Error("NetworkSpec: layer " + std::to_string(l) + " has no heads");
      for (const auto& h : layers[l].heads) h.validate(d);
    }
    if (beta.mode == Beta::Mode::Explicit && !(beta.value > 0.0)) throw Error("NetworkSpec: beta must be > 0");
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct ForwardTrace {
  std::vector<Mat> inputs;                 // X_0..X_L
  Vec res_norms;                           // ||Res(X_l)||_inf, l = 0..L
  std::vector<Vec> thetas;                 // theta(E) per (layer, head), l = 0..L-1
  Vec x_norms;                             // ||X_l||_inf, l = 0..L

  const Mat& output() const { return inputs.back(); }
};

namespace detail {

inline Mat add_row_bias(Mat m, const std::optional<Vec>& b) {
  if (!b) return m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += (*b)[j];
  return m;
}

inline void require_input(const Mat& x, std::size_t d, const char* where) {
  if (x.cols() != d) throw Error(std::string(where) + ": input " + x.shape() + " does not have d=" + std::to_string(d) + " columns");
}

}  // namespace detail

/// beta * (X Wq + 1 bq^T)(X Wk + 1 bk^T)^T
inline Mat attention_scores(const Mat& x, const HeadWeights& head, double beta) {
  head.validate(head.dim());
  detail::require_input(x, head.dim(), "attention_scores");
  const Mat q = detail::add_row_bias(mat_mul(x, head.Wq), head.bq);
  const Mat k = detail::add_row_bias(mat_mul(x, head.Wk), head.bk);
  Mat s = mat_mul(q, k.transpose());
  s *= beta;
  return s;
}

/// Row-softmax of the attention scores (the n x n probability matrix).
inline Mat score_softmax(const Mat& x, const HeadWeights& head, double beta) {
  return softmax_rows(attention_scores(x, head, beta));
}

/// soft(X) X Wv
inline Mat head_forward(const Mat& x, const HeadWeights& head, double beta) {
  return mat_mul(mat_mul(score_softmax(x, head, beta), x), head.Wv);
}

inline Mat layer_forward(const Mat& x, const LayerSpec& layer, double beta) {
  if (layer.heads.empty()) throw Error("layer_forward: layer has no heads");
  Mat out = layer.residual ? x : Mat::zeros(x.rows(), x.cols());
  for (const auto& h : layer.heads) out += head_forward(x, h, beta);
  return out;
}

/// beta * Res(X) Wq Wk^T Res(X)^T
inline Mat balance_matrix(const Mat& x, const HeadWeights& head, double beta) {
  const Mat r = res(x);
  Mat e = mat_mul(mat_mul(r, mat_mul(head.Wq, head.Wk.transpose())), r.transpose());
  e *= beta;
  return e;
}

inline ForwardTrace network_forward(const Mat& x0, const NetworkSpec& net) {
  net.validate();
  detail::require_input(x0, net.d, "network_forward");
  const double beta = net.resolved_beta();
  ForwardTrace t;
  t.inputs.reserve(net.depth() + 1);
  t.inputs.push_back(x0);
  for (const auto& layer : net.layers) {
    const Mat& x = t.inputs.back();
    Vec th;
    th.reserve(layer.heads.size());
    for (const auto& h : layer.heads) th.push_back(theta_balance(balance_matrix(x, h, beta)));
    t.thetas.push_back(std::move(th));
    t.inputs.push_back(layer_forward(x, layer, beta));
  }
  for (const auto& x : t.inputs) {
    t.res_norms.push_back(norm_inf(res(x)));
    t.x_norms.push_back(norm_inf(x));
  }
  return t;
}

/// Network with every weight entry drawn uniformly from [-eta, eta].
inline NetworkSpec sample_network(std::size_t d, std::size_t layers, std::size_t heads, double eta, bool residual,
                                  RngStream& rng, Beta beta = Beta::inv_sqrt_d()) {
  NetworkSpec net;
  net.d = d;
  net.beta = beta;
  net.layers.resize(layers);
  for (auto& l : net.layers) {
    l.residual = residual;
    l.heads.resize(heads);
    for (auto& h : l.heads) {
      h.Wq = sample_uniform_matrix(d, d, eta, rng);
      h.Wk = sample_uniform_matrix(d, d, eta, rng);
      h.Wv = sample_uniform_matrix(d, d, eta, rng);
    }
  }
  return net;
}

}  // namespace attnlab
