// Layer deletion for residual attention networks, collapse-error measurement,
// eta sweeps and the no-skip rank-collapse experiment.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/bounds.hpp"
#include "attnlab/linalg.hpp"

namespace attnlab {

/// Keeps only the last layer, with its residual. Deleting a layer routes its
/// input straight through the skip path, so S'(X) = X + SAtt_L(X).
inline NetworkSpec collapse_to_one_layer(const NetworkSpec& net) {
  net.validate();
  if (!net.all_residual()) throw Error("collapse_to_one_layer: every layer must have a residual connection");
  NetworkSpec out;
  out.d = net.d;
  out.beta = net.beta;
  out.layers.push_back(net.layers.back());
  return out;
}

/// Network made of the kept layers (1-based indices), in order.
inline NetworkSpec delete_layers(const NetworkSpec& net, const std::set<std::size_t>& keep) {
  net.validate();
  if (keep.empty()) throw Error("delete_layers: keep set must be non-empty");
  NetworkSpec out;
  out.d = net.d;
  out.beta = net.beta;
  for (std::size_t k : keep) {
    if (k < 1 || k > net.depth())
      throw Error("delete_layers: layer index " + std::to_string(k) + " outside 1.." + std::to_string(net.depth()));
    out.layers.push_back(net.layers[k - 1]);
  }
  return out;
}

struct TraceSummary {
  Vec res_norms;
  Vec x_norms;
};

inline TraceSummary summarize(const ForwardTrace& t) { return {t.res_norms, t.x_norms}; }

struct CollapseResult {
  double err_inf = 0.0;
  double x_inf = 0.0;
  double rel_err = 0.0;
  double bound = 0.0;
  double delta = 0.0;
  double C = 0.0;
  bool within_bound = true;
  bool regime_warning = false;
  TraceSummary trace_full;
  TraceSummary trace_collapsed;
};

/// Bound instantiated with the network's largest weight norm and phi0 = ||X||_inf.
inline BoundReport collapse_bound(const NetworkSpec& net, double x_inf) {
  return theorem_bound({net.max_weight_norm(), x_inf, net.max_heads(), net.depth()});
}

inline CollapseResult collapse_error(const NetworkSpec& net, const Mat& x, double slack = 1e-9) {
  const double x_inf = norm_inf(x);
  if (!(x_inf > 0.0)) throw Error("collapse_error: input must have ||X||_inf > 0");
  const ForwardTrace full = network_forward(x, net);
  const ForwardTrace collapsed = network_forward(x, collapse_to_one_layer(net));
  const BoundReport b = collapse_bound(net, x_inf);
  CollapseResult r;
  r.err_inf = max_abs_diff(full.output(), collapsed.output());
  r.x_inf = x_inf;
  r.rel_err = r.err_inf / x_inf;
  r.bound = b.final_bound;
  r.delta = b.delta;
  r.C = b.C;
  r.within_bound = r.err_inf <= r.bound * (1.0 + slack);
  r.regime_warning = b.regime_warning;
  r.trace_full = summarize(full);
  r.trace_collapsed = summarize(collapsed);
  return r;
}

inline double median(Vec v) {
  if (v.empty()) throw Error("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LineFit fit_line(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit_line: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = x.size();
  return f;
}

/// Slope of log(y) against log(x).
inline LineFit fit_loglog(const Vec& x, const Vec& y) {
  Vec lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  return fit_line(lx, ly);
}

// ---------------------------------------------------------------------------
// eta sweeps

struct SweepGrid {
  Vec etas;
  std::vector<std::size_t> layers;
  std::vector<std::size_t> heads;
  std::size_t n = 8;
  std::size_t d = 8;
  double phi0 = 1.0;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  double slack = 1e-9;

  void validate() const {
    if (etas.empty() || layers.empty() || heads.empty()) throw Error("sweep: eta, layer and head lists must be non-empty");
    for (double e : etas)
      if (!(e >= 0.0) || !std::isfinite(e)) throw Error("sweep: eta values must be finite and >= 0");
    for (auto l : layers)
      if (l == 0) throw Error("sweep: layer counts must be >= 1");
    for (auto h : heads)
      if (h == 0) throw Error("sweep: head counts must be >= 1");
    if (n == 0 || d == 0 || trials == 0) throw Error("sweep: n, d and trials must be >= 1");
    if (!(phi0 > 0.0)) throw Error("sweep: phi0 must be > 0");
  }
};

struct SweepRow {
  double eta;
  std::size_t L, H, n, d;
  double phi0;
  std::size_t trial;
  std::uint64_t seed;
  double err_inf, x_inf, rel_err, delta, C, paper_bound;
  bool bound_ok;
};

struct SweepPointSummary {
  double eta;
  std::size_t L, H;
  double median_rel_err;
  std::size_t bound_exceedances;
  bool regime_warning;  // eps_ell >= 1 at the declared (eta, phi0)
};

struct SweepSlope {
  std::size_t L, H;
  double slope;  // log-log slope of median rel_err vs eta
  bool median_strictly_increasing;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPointSummary> points;
  std::vector<SweepSlope> slopes;
  std::vector<std::string> warnings;
};

/// Stream index for trial t at grid point (L, H); independent of eta so that
/// every eta sees the same unit-scale draws (paired trials).
inline std::uint64_t sweep_stream(std::size_t L, std::size_t H, std::size_t trial) {
  return (static_cast<std::uint64_t>(L) << 48) ^ (static_cast<std::uint64_t>(H) << 32) ^ trial;
}

/// One sweep trial: X drawn from [-phi0, phi0], then weights from [-eta, eta].
inline SweepRow sweep_trial(const SweepGrid& g, double eta, std::size_t L, std::size_t H, std::size_t trial) {
  RngStream rng(g.seed, sweep_stream(L, H, trial));
  const Mat x = sample_uniform_matrix(g.n, g.d, g.phi0, rng);
  const NetworkSpec net = sample_network(g.d, L, H, eta, true, rng);
  const CollapseResult c = collapse_error(net, x, g.slack);
  return {eta, L, H, g.n, g.d, g.phi0, trial, g.seed, c.err_inf, c.x_inf, c.rel_err, c.delta, c.C, c.bound, c.within_bound};
}

inline SweepResult eta_sweep(const SweepGrid& g) {
  g.validate();
  SweepResult out;
  for (auto L : g.layers) {
    for (auto H : g.heads) {
      Vec medians;
      for (double eta : g.etas) {
        Vec rel;
        std::size_t exceed = 0;
        for (std::size_t t = 0; t < g.trials; ++t) {
          SweepRow r = sweep_trial(g, eta, L, H, t);
          rel.push_back(r.rel_err);
          if (!r.bound_ok) ++exceed;
          out.rows.push_back(r);
        }
        bool warn = false;
        for (std::size_t ell = 0; ell <= L; ++ell) warn = warn || !eps_in_regime(eps_ell(eta, g.phi0, H, ell));
        if (warn)
          out.warnings.push_back("eps_ell outside (0,1) at eta=" + format_real(eta) + " L=" + std::to_string(L) +
                                 " H=" + std::to_string(H));
        const double med = median(rel);
        medians.push_back(med);
        out.points.push_back({eta, L, H, med, exceed, warn});
      }
      // strictly increasing in the order of increasing eta
      std::vector<std::size_t> order(g.etas.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.etas[a] < g.etas[b]; });
      bool increasing = true;
      for (std::size_t i = 1; i < order.size(); ++i)
        if (!(medians[order[i]] > medians[order[i - 1]])) increasing = false;
      double slope = std::nan("");
      try {
        slope = fit_loglog(g.etas, medians).slope;
      } catch (const Error&) {
        // fewer than two distinct positive points; slope stays NaN
      }
      out.slopes.push_back({L, H, slope, increasing});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// rank collapse without skip connections

/// ||Res(X_l)||_inf for l = 0..L; the network must have no residual layers.
inline Vec rank_collapse_trace(const NetworkSpec& net, const Mat& x) {
  net.validate();
  if (!net.none_residual()) throw Error("rank_collapse_trace: every layer must have residual = false");
  return network_forward(x, net).res_norms;
}

/// Slope of log(-log r_l) against l, over entries with 0 < r_l < 1. A positive
/// slope indicates faster-than-geometric (doubly exponential) decay.
inline LineFit fit_log_neg_log(const Vec& seq) {
  Vec xs, ys;
  for (std::size_t l = 0; l < seq.size(); ++l) {
    if (seq[l] > 0.0 && seq[l] < 1.0) {
      xs.push_back(static_cast<double>(l));
      ys.push_back(std::log(-std::log(seq[l])));
    }
  }
  return fit_line(xs, ys);
}

struct RankCollapseConfig {
  std::size_t layers = 5;
  std::size_t heads = 1;
  std::size_t n = 6;
  std::size_t d = 6;
  double eta = 0.1;
  double phi0 = 1.0;
  std::optional<double> beta;  // default 1/sqrt(d)
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
};

struct RankCollapseRow {
  std::size_t trial;
  Vec res_norms;
  Vec x_norms;
  bool strictly_decreasing;
};

struct RankCollapseResult {
  std::vector<RankCollapseRow> rows;
  Vec mean_res_norms;
  double fraction_strictly_decreasing = 0.0;
  LineFit log_neg_log_fit;
  Vec eps_ell;  // regime check 2 eta phi0 (1 + H eta)^l
  bool regime_ok = true;
};

inline RankCollapseResult rank_collapse_experiment(const RankCollapseConfig& c) {
  if (c.trials == 0 || c.layers == 0 || c.heads == 0 || c.n == 0 || c.d == 0)
    throw Error("rank-collapse: layers, heads, n, d and trials must be >= 1");
  const Beta beta = c.beta ? Beta::explicit_value(*c.beta) : Beta::inv_sqrt_d();
  RankCollapseResult out;
  out.mean_res_norms.assign(c.layers + 1, 0.0);
  std::size_t decreasing = 0;
  for (std::size_t t = 0; t < c.trials; ++t) {
    RngStream rng(c.seed, t);
    const Mat x = sample_uniform_matrix(c.n, c.d, c.phi0, rng);
    const NetworkSpec net = sample_network(c.d, c.layers, c.heads, c.eta, false, rng, beta);
    const ForwardTrace tr = network_forward(x, net);
    RankCollapseRow row{t, tr.res_norms, tr.x_norms, true};
    for (std::size_t l = 1; l < row.res_norms.size(); ++l)
      if (!(row.res_norms[l] < row.res_norms[l - 1])) row.strictly_decreasing = false;
    if (row.strictly_decreasing) ++decreasing;
    for (std::size_t l = 0; l < row.res_norms.size(); ++l) out.mean_res_norms[l] += row.res_norms[l];
    out.rows.push_back(std::move(row));
  }
  for (auto& m : out.mean_res_norms) m /= static_cast<double>(c.trials);
  out.fraction_strictly_decreasing = static_cast<double>(decreasing) / static_cast<double>(c.trials);
  out.log_neg_log_fit = fit_log_neg_log(out.mean_res_norms);
  for (std::size_t l = 0; l <= c.layers; ++l) {
    out.eps_ell.push_back(eps_ell(c.eta, c.phi0, c.heads, l));
    out.regime_ok = out.regime_ok && eps_in_regime(out.eps_ell.back());
  }
  return out;
}

}  // namespace attnlab
