// Property-based audit of the perturbation and collapse inequalities.
//
// Every checker draws one random instance satisfying its hypotheses from the
// stream (seed, trial_index), evaluates the measured side and the bound side of
// the conclusion, and reports them. Aggregation is ordered by trial index, so a
// report is a pure function of its TrialConfig.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/bounds.hpp"
#include "attnlab/collapse.hpp"
#include "attnlab/linalg.hpp"

namespace attnlab {

enum class LemmaId {
  FACT_3_2,
  FACT_3_3_P1,
  FACT_3_3_P2,
  FACT_3_3_P3,
  L4_1,
  L4_2_P1,
  L4_2_P2,
  L4_2_P3,
  L4_2_P4,
  L4_3_P1,
  L4_3_P2,
  L4_4,
  L5_1,
  L5_2,
  LB_1,
  LB_2,
  LC_1_P1,
  LC_1_P2,
  LC_2_P1,
  LC_2_P2,
  LC_2_P3,
  COR_D_1,
  LD_2,
  LD_3_P1,
  LD_3_P2,
  LD_4,
  LD_5_P1,
  LD_5_P2,
  THM_5_3,
};

enum class CheckClass { Robust, Audit };

struct LemmaInfo {
  LemmaId id;
  std::string_view name;
  CheckClass cls;
  std::string_view statement;
};

inline constexpr std::array<LemmaInfo, 29> kLemmas{{
    {LemmaId::FACT_3_2, "FACT_3_2", CheckClass::Robust, "soft(x + a1) = soft(x)"},
    {LemmaId::FACT_3_3_P1, "FACT_3_3_P1", CheckClass::Robust, "||AB||_1 <= ||A||_1 ||B||_1"},
    {LemmaId::FACT_3_3_P2, "FACT_3_3_P2", CheckClass::Audit, "||AB||_inf <= ||A||_inf ||B||_inf"},
    {LemmaId::FACT_3_3_P3, "FACT_3_3_P3", CheckClass::Audit, "||AB||_1 <= ||A||_1 ||B||_inf"},
    {LemmaId::L4_1, "L4_1", CheckClass::Robust, "||A-B||_inf <= eps => ||Res(A)-Res(B)||_inf <= eps"},
    {LemmaId::L4_2_P1, "L4_2_P1", CheckClass::Robust, "|exp(a_i+b_i)-exp(a_i)| <= (e^eps-1) exp(a_i)"},
    {LemmaId::L4_2_P2, "L4_2_P2", CheckClass::Robust, "|exp(a_i+b_i)-exp(a_i)| <= (e^eps-1) exp(a_i+b_i)"},
    {LemmaId::L4_2_P3, "L4_2_P3", CheckClass::Robust, "|alpha(a+b)-alpha(a)| <= (e^eps-1) alpha(a)"},
    {LemmaId::L4_2_P4, "L4_2_P4", CheckClass::Robust, "|alpha(a+b)-alpha(a)| <= (e^eps-1) alpha(a+b)"},
    {LemmaId::L4_3_P1, "L4_3_P1", CheckClass::Robust, "|1/alpha(a+b)-1/alpha(a)| <= (e^eps-1)/alpha(a)"},
    {LemmaId::L4_3_P2, "L4_3_P2", CheckClass::Robust, "|1/alpha(a+b)-1/alpha(a)| <= (e^eps-1)/alpha(a+b)"},
    {LemmaId::L4_4, "L4_4", CheckClass::Robust, "||b||_inf <= eps => ||soft(a+b)-soft(a)||_inf <= 2(e^eps-1)"},
    {LemmaId::L5_1, "L5_1", CheckClass::Audit, "||Res(SAtt(X))||_inf <= (e^theta-1)||Wv||_inf ||Res(X)||_inf"},
    {LemmaId::L5_2, "L5_2", CheckClass::Audit, "||soft_2(X+soft_1(X)) - soft_2(X)||_inf <= 2g(2eps)"},
    {LemmaId::LB_1, "LB_1", CheckClass::Robust, "e^-D_ii Pt_ij <= P_ij <= e^D_ii Pt_ij"},
    {LemmaId::LB_2, "LB_2", CheckClass::Robust, "beta <= 1/(||Res X||^2 eta^2) => theta(E) <= 1"},
    {LemmaId::LC_1_P1, "LC_1_P1", CheckClass::Audit, "||soft_2(B)-soft_2(X)||_inf <= 3g(2H eps)"},
    {LemmaId::LC_1_P2, "LC_1_P2", CheckClass::Audit, "||softmv_2(B)-softmv_2(X)||_inf <= 3g(2H eps)"},
    {LemmaId::LC_2_P1, "LC_2_P1", CheckClass::Audit, "K ||Res(X_l)||_inf <= eps_l"},
    {LemmaId::LC_2_P2, "LC_2_P2", CheckClass::Audit, "||(B-X_l) Wv||_inf <= H eps_l"},
    {LemmaId::LC_2_P3, "LC_2_P3", CheckClass::Audit, "||X_l Wv||_inf <= 1"},
    {LemmaId::COR_D_1, "COR_D_1", CheckClass::Robust, "||soft(a+b)-soft(a)||_inf <= 2(e^||b||_inf - 1)"},
    {LemmaId::LD_2, "LD_2", CheckClass::Robust, "||b||_inf <= 1 => ||soft(a+b)-soft(a)||_inf <= 4||b||_inf"},
    {LemmaId::LD_3_P1, "LD_3_P1", CheckClass::Audit, "||soft(X)-soft(Y)||_inf <= K1 ||X-Y||_inf"},
    {LemmaId::LD_3_P2, "LD_3_P2", CheckClass::Audit, "||softmv(X)-softmv(Y)||_inf <= K2 ||X-Y||_inf"},
    {LemmaId::LD_4, "LD_4", CheckClass::Audit, "||softmv(X_l)-softmv(Y)||_inf <= 3eta(eps_l^2+1) ||X_l-Y||_inf"},
    {LemmaId::LD_5_P1, "LD_5_P1", CheckClass::Robust, "||X_{l+1}||_inf <= (1+H eta) ||X_l||_inf"},
    {LemmaId::LD_5_P2, "LD_5_P2", CheckClass::Robust, "||X_l||_inf <= phi0 (1+H eta)^l"},
    {LemmaId::THM_5_3, "THM_5_3", CheckClass::Audit, "||S(X)-S'(X)||_inf <= (C^L+...+C+1) delta"},
}};

inline const LemmaInfo& lemma_info(LemmaId id) { return kLemmas[static_cast<std::size_t>(id)]; }
inline std::string_view lemma_name(LemmaId id) { return lemma_info(id).name; }

inline std::optional<LemmaId> parse_lemma_id(std::string_view s) {
  for (const auto& info : kLemmas)
    if (info.name == s) return info.id;
  return std::nullopt;
}

/// An id, or one of the groups "robust", "audit", "all".
inline std::vector<LemmaId> lemma_selection(std::string_view s) {
  std::vector<LemmaId> out;
  if (s == "all" || s == "robust" || s == "audit") {
    for (const auto& info : kLemmas) {
      if (s == "all" || (s == "robust") == (info.cls == CheckClass::Robust)) out.push_back(info.id);
    }
    return out;
  }
  if (auto id = parse_lemma_id(s)) return {*id};
  throw Error("unknown lemma id '" + std::string(s) + "'");
}

struct TrialConfig {
  std::size_t n_min = 2, n_max = 8;
  std::size_t d_min = 2, d_max = 8;
  double eta = 0.1;          // weight entry bound
  double eps = 0.1;          // perturbation bound
  double phi0 = 1.0;         // input entry bound
  double logit_scale = 4.0;  // entry bound for raw softmax arguments
  std::size_t max_layers = 4;
  std::size_t max_heads = 3;
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  double slack = 1e-9;
  std::size_t workers = 0;  // 0 = hardware concurrency

  void validate() const {
    if (trials < 1) throw Error("TrialConfig: trials must be >= 1");
    if (!(slack >= 0.0)) throw Error("TrialConfig: slack must be >= 0");
    if (n_min < 1 || n_max < n_min) throw Error("TrialConfig: empty n range");
    if (d_min < 1 || d_max < d_min) throw Error("TrialConfig: empty d range");
    if (!(eta >= 0.0) || !(eps >= 0.0) || !(phi0 > 0.0) || !(logit_scale >= 0.0))
      throw Error("TrialConfig: eta, eps, logit_scale must be >= 0 and phi0 > 0");
    if (max_layers < 1 || max_heads < 1) throw Error("TrialConfig: max_layers and max_heads must be >= 1");
  }
};

/// Named matrices and scalars describing one trial, for counterexamples.
struct Instance {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::pair<std::string, Mat>> matrices;
  std::vector<std::pair<std::string, double>> scalars;

  std::size_t size_score() const noexcept { return n + d; }
  void add(std::string name, Mat m) { matrices.emplace_back(std::move(name), std::move(m)); }
  void add(std::string name, double v) { scalars.emplace_back(std::move(name), v); }
  void add_vec(std::string name, const Vec& v) { add(std::move(name), Mat(1, v.size(), v)); }
};

struct TrialOutcome {
  double measured = 0.0;
  double bound = 0.0;
  std::optional<double> alt_bound;  // second reading of the bound, where one exists
  std::size_t resamples = 0;
};

inline bool violates(double measured, double bound, double slack) {
  return measured > bound * (1.0 + slack) + slack;
}

/// measured / bound when bound > 0; +inf for a positive measurement against a zero bound.
inline double severity(double measured, double bound) {
  if (bound > 0.0) return measured / bound;
  return measured > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

struct SweepPoint {
  std::size_t d = 0;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;
};

struct AltBoundSummary {
  std::string label;
  std::size_t violations = 0;
  double max_ratio = 0.0;
};

struct Counterexample {
  std::string source;  // "hand witness" or "trial"
  std::uint64_t stream_index = 0;
  Instance instance;
  double measured = 0.0;
  double bound = 0.0;
};

struct LemmaReport {
  LemmaId id{};
  CheckClass cls = CheckClass::Robust;
  std::size_t trials_run = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;
  std::uint64_t worst_seed = 0;  // stream index of the worst trial
  double worst_measured = 0.0;
  double worst_bound = 0.0;
  std::size_t resamples = 0;
  std::optional<AltBoundSummary> alternate;
  std::vector<SweepPoint> dimension_sweep;  // audit class only
  std::optional<Counterexample> counterexample;
  std::optional<double> eta_slope;  // THM_5_3 only

  bool failed() const noexcept { return cls == CheckClass::Robust && violations > 0; }
};

namespace detail {

inline constexpr std::size_t kMaxRejections = 1000;

struct Dims {
  std::size_t n, d;
};

inline Dims draw_dims(const TrialConfig& c, RngStream& rng) {
  const std::size_t n = rng.uniform_int(c.n_min, c.n_max);
  const std::size_t d = rng.uniform_int(c.d_min, c.d_max);
  return {n, d};
}

/// Scale in (0, 1], so perturbations exercise every magnitude up to the bound.
inline double unit_fraction(RngStream& rng) { return 1.0 - rng.uniform01(); }

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class Draw>
auto rejection_sample(const char* lemma, const char* hypothesis, std::size_t& resamples, Draw&& draw) {
  for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
    auto candidate = draw();
    if (candidate) return std::move(*candidate);
    ++resamples;
  }
  throw Error(std::string(lemma) + ": could not satisfy hypothesis '" + hypothesis + "' after " +
              std::to_string(kMaxRejections) + " attempts");
}

/// Keeps the component with the largest measured/bound ratio.
struct Worst {
  double measured = 0.0;
  double bound = 0.0;
  bool any = false;
  void consider(double m, double b) {
    if (!any || severity(m, b) > severity(measured, bound)) {
      measured = m;
      bound = b;
      any = true;
    }
  }
  TrialOutcome outcome() const { return {measured, bound, std::nullopt, 0}; }
};

inline HeadWeights sample_head(std::size_t d, double eta, RngStream& rng) {
  HeadWeights h;
  h.Wq = sample_uniform_matrix(d, d, eta, rng);
  h.Wk = sample_uniform_matrix(d, d, eta, rng);
  h.Wv = sample_uniform_matrix(d, d, eta, rng);
  return h;
}

inline void capture_head(Instance* inst, const std::string& prefix, const HeadWeights& h) {
  if (!inst) return;
  inst->add(prefix + "Wq", h.Wq);
  inst->add(prefix + "Wk", h.Wk);
  inst->add(prefix + "Wv", h.Wv);
}

inline void capture_network(Instance* inst, const NetworkSpec& net) {
  if (!inst) return;
  for (std::size_t l = 0; l < net.depth(); ++l)
    for (std::size_t h = 0; h < net.layers[l].heads.size(); ++h)
      capture_head(inst, "layer" + std::to_string(l) + ".head" + std::to_string(h) + ".", net.layers[l].heads[h]);
}

using Checker = TrialOutcome (*)(const TrialConfig&, RngStream&, Instance*);

// --- softmax / exp / alpha -------------------------------------------------

inline TrialOutcome check_fact_3_2(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [n, d] = draw_dims(c, rng);
  const Vec x = sample_uniform_vector(n, c.logit_scale, rng);
  const double a = rng.symmetric(10.0);
  Vec shifted = x;
  for (auto& v : shifted) v += a;
  const double measured = max_abs_diff(softmax_vec(shifted), softmax_vec(x));
  if (inst) {
    inst->n = n;
    inst->add_vec("x", x);
    inst->add("a", a);
  }
  return {measured, 0.0, std::nullopt, 0};
}

enum class NormPair { L1L1, InfInf, L1Inf };

inline TrialOutcome check_fact_3_3(const TrialConfig& c, RngStream& rng, Instance* inst, NormPair which) {
  const auto [n, k] = draw_dims(c, rng);
  const std::size_t m = rng.uniform_int(c.d_min, c.d_max);
  const Mat A = sample_uniform_matrix(n, k, 1.0, rng);
  const Mat B = sample_uniform_matrix(k, m, 1.0, rng);
  const Mat AB = mat_mul(A, B);
  if (inst) {
    inst->n = n;
    inst->d = k;
    inst->add("A", A);
    inst->add("B", B);
  }
  switch (which) {
    case NormPair::L1L1: return {norm_l1(AB), norm_l1(A) * norm_l1(B), std::nullopt, 0};
    case NormPair::InfInf: return {norm_inf(AB), norm_inf(A) * norm_inf(B), std::nullopt, 0};
    case NormPair::L1Inf: return {norm_l1(AB), norm_l1(A) * norm_inf(B), std::nullopt, 0};
  }
  return {};
}
inline TrialOutcome check_fact_3_3_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_fact_3_3(c, r, i, NormPair::L1L1); }
inline TrialOutcome check_fact_3_3_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_fact_3_3(c, r, i, NormPair::InfInf); }
inline TrialOutcome check_fact_3_3_p3(const TrialConfig& c, RngStream& r, Instance* i) { return check_fact_3_3(c, r, i, NormPair::L1Inf); }

inline TrialOutcome check_l4_1(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [n, d] = draw_dims(c, rng);
  const Mat A = sample_uniform_matrix(n, d, c.phi0, rng);
  const Mat B = A + sample_uniform_matrix(n, d, c.eps, rng);
  if (inst) {
    inst->n = n;
    inst->d = d;
    inst->add("A", A);
    inst->add("B", B);
    inst->add("eps", c.eps);
  }
  return {max_abs_diff(res(A), res(B)), c.eps, std::nullopt, 0};
}

struct PerturbedLogits {
  Vec a, b;
};

inline PerturbedLogits draw_logits(const TrialConfig& c, RngStream& rng, Instance* inst, double b_scale) {
  const auto [n, d] = draw_dims(c, rng);
  PerturbedLogits p{sample_uniform_vector(n, c.logit_scale, rng), sample_uniform_vector(n, b_scale, rng)};
  if (inst) {
    inst->n = n;
    inst->add_vec("a", p.a);
    inst->add_vec("b", p.b);
  }
  return p;
}

inline TrialOutcome check_l4_2_entry(const TrialConfig& c, RngStream& rng, Instance* inst, bool relative_to_perturbed) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  const double k = std::expm1(c.eps);
  Worst w;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double lhs = std::abs(std::exp(a[i] + b[i]) - std::exp(a[i]));
    w.consider(lhs, k * std::exp(relative_to_perturbed ? a[i] + b[i] : a[i]));
  }
  return w.outcome();
}
inline TrialOutcome check_l4_2_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_l4_2_entry(c, r, i, false); }
inline TrialOutcome check_l4_2_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_l4_2_entry(c, r, i, true); }

inline TrialOutcome check_l4_2_p3(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  const double aa = alpha(a), ab = alpha(add(a, b));
  return {std::abs(ab - aa), std::expm1(c.eps) * aa, std::nullopt, 0};
}
inline TrialOutcome check_l4_2_p4(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  const double aa = alpha(a), ab = alpha(add(a, b));
  return {std::abs(ab - aa), std::expm1(c.eps) * ab, std::nullopt, 0};
}
inline TrialOutcome check_l4_3_p1(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  const double ia = 1.0 / alpha(a), ib = 1.0 / alpha(add(a, b));
  return {std::abs(ib - ia), std::expm1(c.eps) * ia, std::nullopt, 0};
}
inline TrialOutcome check_l4_3_p2(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  const double ia = 1.0 / alpha(a), ib = 1.0 / alpha(add(a, b));
  return {std::abs(ib - ia), std::expm1(c.eps) * ib, std::nullopt, 0};
}

inline double softmax_shift_gap(const Vec& a, const Vec& b) { return max_abs_diff(softmax_vec(add(a, b)), softmax_vec(a)); }

inline TrialOutcome check_l4_4(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [a, b] = draw_logits(c, rng, inst, c.eps);
  return {softmax_shift_gap(a, b), 2.0 * std::expm1(c.eps), std::nullopt, 0};
}

inline TrialOutcome check_cor_d_1(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const double scale = 2.0 * unit_fraction(rng);
  const auto [a, b] = draw_logits(c, rng, inst, scale);
  return {softmax_shift_gap(a, b), 2.0 * std::expm1(norm_inf(b)), std::nullopt, 0};
}

// The printed statement compares against soft(b); the corollary it follows
// from, and every use of it, compare against soft(a).
inline TrialOutcome check_ld_2(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const double scale = unit_fraction(rng);
  const auto [a, b] = draw_logits(c, rng, inst, scale);
  return {softmax_shift_gap(a, b), 4.0 * norm_inf(b), std::nullopt, 0};
}

inline TrialOutcome check_lb_1(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [n, d] = draw_dims(c, rng);
  const Mat A = sample_uniform_matrix(n, n, c.logit_scale, rng);
  const Mat E = sample_uniform_matrix(n, n, 2.0 * unit_fraction(rng), rng);
  const Mat P = softmax_rows(A);
  const Mat Pt = softmax_rows(A - E);
  if (inst) {
    inst->n = n;
    inst->add("A", A);
    inst->add("E", E);
  }
  Worst w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = E.row(i);
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    const double D = *hi - *lo;
    for (std::size_t j = 0; j < n; ++j) {
      w.consider(P(i, j), std::exp(D) * Pt(i, j));
      w.consider(std::exp(-D) * Pt(i, j), P(i, j));
    }
  }
  return w.outcome();
}

inline TrialOutcome check_lb_2(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [n, d] = draw_dims(c, rng);
  const Mat X = sample_uniform_matrix(n, d, c.phi0, rng);
  const HeadWeights h = sample_head(d, c.eta, rng);
  const double r = norm_inf(res(X));
  if (!(r > 0.0) || !(c.eta > 0.0)) return {0.0, 1.0, std::nullopt, 0};
  const double beta = beta_threshold(r, c.eta);
  if (inst) {
    inst->n = n;
    inst->d = d;
    inst->add("X", X);
    inst->add("Wq", h.Wq);
    inst->add("Wk", h.Wk);
    inst->add("beta", beta);
  }
  return {theta_balance(balance_matrix(X, h, beta)), 1.0, std::nullopt, 0};
}

// --- attention layers ------------------------------------------------------

inline TrialOutcome check_l5_1(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const auto [n, d] = draw_dims(c, rng);
  const Mat X = sample_uniform_matrix(n, d, c.phi0, rng);
  const HeadWeights h = sample_head(d, c.eta, rng);
  const double beta = Beta::inv_sqrt_d().resolve(d);
  const double theta = theta_balance(balance_matrix(X, h, beta));
  const double K = contraction_K(theta, norm_inf(h.Wv));
  if (inst) {
    inst->n = n;
    inst->d = d;
    inst->add("X", X);
    capture_head(inst, "", h);
    inst->add("theta", theta);
  }
  return {norm_inf(res(head_forward(X, h, beta))), K * norm_inf(res(X)), std::nullopt, 0};
}

// The score-softmax map is n x n, so B = X + soft_1(X) needs n = d.
inline TrialOutcome check_l5_2(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const std::size_t d = rng.uniform_int(c.d_min, c.d_max);
  const std::size_t n = d;
  const Mat X = sample_uniform_matrix(n, d, c.phi0, rng);
  const HeadWeights h1 = sample_head(d, c.eta, rng);
  const HeadWeights h2 = sample_head(d, c.eta, rng);
  const double beta = Beta::inv_sqrt_d().resolve(d);
  const Mat A = score_softmax(X, h1, beta);
  const Mat B = X + A;
  const double eps = norm_inf(res(A));
  if (inst) {
    inst->n = n;
    inst->d = d;
    inst->add("X", X);
    capture_head(inst, "soft1.", h1);
    capture_head(inst, "soft2.", h2);
    inst->add("eps", eps);
  }
  return {max_abs_diff(score_softmax(B, h2, beta), score_softmax(X, h2, beta)), single_head_skip_bound(eps),
          std::nullopt, 0};
}

// eps is the smallest value meeting every hypothesis that bounds it:
// ||Res(A_i)|| <= K_i ||Res(X)|| <= eps and ||(B-X) Wv|| <= H eps.
inline TrialOutcome check_lc_1(const TrialConfig& c, RngStream& rng, Instance* inst, bool with_values) {
  std::size_t resamples = 0;
  struct Draw {
    std::size_t n, d, H;
    Mat X, B;
    std::vector<HeadWeights> first;
    HeadWeights second;
    double eps;
  };
  Draw s = rejection_sample(with_values ? "LC_1_P2" : "LC_1_P1", "||X Wv||_inf <= 1", resamples,
                            [&]() -> std::optional<Draw> {
    const auto [n, d] = draw_dims(c, rng);
    const std::size_t H = rng.uniform_int(1, c.max_heads);
    Draw t{n, d, H, sample_uniform_matrix(n, d, c.phi0, rng), Mat{}, {}, {}, 0.0};
    const double beta = Beta::inv_sqrt_d().resolve(d);
    const double res_x = norm_inf(res(t.X));
    t.B = t.X;
    for (std::size_t i = 0; i < H; ++i) {
      t.first.push_back(sample_head(d, c.eta, rng));
      const HeadWeights& h = t.first.back();
      const Mat Ai = head_forward(t.X, h, beta);
      const double K = contraction_K(theta_balance(balance_matrix(t.X, h, beta)), norm_inf(h.Wv));
      t.eps = std::max({t.eps, norm_inf(res(Ai)), K * res_x});
      t.B += Ai;
    }
    t.second = sample_head(d, c.eta, rng);
    t.eps = std::max(t.eps, norm_inf(mat_mul(t.B - t.X, t.second.Wv)) / static_cast<double>(H));
    if (norm_inf(mat_mul(t.X, t.second.Wv)) > 1.0) return std::nullopt;
    return t;
  });
  const double beta = Beta::inv_sqrt_d().resolve(s.d);
  const double measured = with_values
                              ? max_abs_diff(head_forward(s.B, s.second, beta), head_forward(s.X, s.second, beta))
                              : max_abs_diff(score_softmax(s.B, s.second, beta), score_softmax(s.X, s.second, beta));
  if (inst) {
    inst->n = s.n;
    inst->d = s.d;
    inst->add("X", s.X);
    for (std::size_t i = 0; i < s.first.size(); ++i) capture_head(inst, "soft1." + std::to_string(i) + ".", s.first[i]);
    capture_head(inst, "soft2.", s.second);
    inst->add("eps", s.eps);
  }
  return {measured, multi_head_skip_bound_stated(s.H, s.eps), multi_head_skip_bound_derived(s.H, s.eps), resamples};
}
inline TrialOutcome check_lc_1_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_lc_1(c, r, i, false); }
inline TrialOutcome check_lc_1_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_lc_1(c, r, i, true); }

struct SampledNetwork {
  NetworkSpec net;
  Mat X0;
  ForwardTrace trace;
  double phi0;
  std::size_t H;
};

/// Residual network with L in [min_layers, max_layers], H in [1, max_heads] and X0 in [-phi0, phi0].
inline SampledNetwork draw_residual_network(const TrialConfig& c, RngStream& rng, std::size_t min_layers = 1) {
  const auto [n, d] = draw_dims(c, rng);
  const std::size_t L = rng.uniform_int(std::min(min_layers, c.max_layers), c.max_layers);
  const std::size_t H = rng.uniform_int(1, c.max_heads);
  Mat X0 = sample_uniform_matrix(n, d, c.phi0, rng);
  NetworkSpec net = sample_network(d, L, H, c.eta, true, rng);
  ForwardTrace tr = network_forward(X0, net);
  const double phi0 = norm_inf(X0);
  return {std::move(net), std::move(X0), std::move(tr), phi0, H};
}

inline void capture_sampled(Instance* inst, const SampledNetwork& s) {
  if (!inst) return;
  inst->n = s.X0.rows();
  inst->d = s.X0.cols();
  inst->add("X0", s.X0);
  capture_network(inst, s.net);
}

inline TrialOutcome check_lc_2(const TrialConfig& c, RngStream& rng, Instance* inst, int part) {
  std::size_t resamples = 0;
  if (!(c.eta > 0.0 && c.eta <= 1.0)) throw Error("LC_2: hypothesis eta in (0, 1] violated by configuration");
  SampledNetwork s = rejection_sample("LC_2", "eps_l in (0, 1) for every layer", resamples,
                                      [&]() -> std::optional<SampledNetwork> {
    SampledNetwork t = draw_residual_network(c, rng);
    for (std::size_t l = 0; l <= t.net.depth(); ++l)
      if (!eps_in_regime(eps_ell(c.eta, t.phi0, t.H, l))) return std::nullopt;
    return t;
  });
  Worst w;
  for (std::size_t l = 0; l < s.net.depth(); ++l) {
    const Mat& X = s.trace.inputs[l];
    const double el = eps_ell(c.eta, s.phi0, s.H, l);
    for (const auto& h : s.net.layers[l].heads) {
      switch (part) {
        case 1: w.consider(contraction_K(1.0, norm_inf(h.Wv)) * norm_inf(res(X)), el); break;
        case 2: w.consider(norm_inf(mat_mul(s.trace.inputs[l + 1] - X, h.Wv)), static_cast<double>(s.H) * el); break;
        default: w.consider(norm_inf(mat_mul(X, h.Wv)), 1.0); break;
      }
    }
  }
  capture_sampled(inst, s);
  TrialOutcome o = w.outcome();
  o.resamples = resamples;
  return o;
}
inline TrialOutcome check_lc_2_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_lc_2(c, r, i, 1); }
inline TrialOutcome check_lc_2_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_lc_2(c, r, i, 2); }
inline TrialOutcome check_lc_2_p3(const TrialConfig& c, RngStream& r, Instance* i) { return check_lc_2(c, r, i, 3); }

// Lipschitz statements use the unscaled score map X W X^T (beta = 1).
inline TrialOutcome check_ld_3(const TrialConfig& c, RngStream& rng, Instance* inst, bool with_values) {
  std::size_t resamples = 0;
  struct Draw {
    Mat X, Y;
    HeadWeights h;
  };
  Draw s = rejection_sample(with_values ? "LD_3_P2" : "LD_3_P1",
                            "||Y-X|| <= 2||X|| and ||score(X)-score(Y)|| <= 1", resamples,
                            [&]() -> std::optional<Draw> {
    const auto [n, d] = draw_dims(c, rng);
    Draw t;
    t.X = sample_uniform_matrix(n, d, c.phi0, rng);
    t.Y = t.X + sample_uniform_matrix(n, d, c.eps * unit_fraction(rng), rng);
    t.h = sample_head(d, c.eta, rng);
    if (max_abs_diff(t.X, t.Y) > 2.0 * norm_inf(t.X)) return std::nullopt;
    if (max_abs_diff(attention_scores(t.X, t.h, 1.0), attention_scores(t.Y, t.h, 1.0)) > 1.0) return std::nullopt;
    return t;
  });
  const double w_inf = norm_inf(mat_mul(s.h.Wq, s.h.Wk.transpose()));
  const auto [K1, K2] = lipschitz_constants(norm_inf(s.X), w_inf, norm_inf(s.h.Wv));
  const double dxy = max_abs_diff(s.X, s.Y);
  if (inst) {
    inst->n = s.X.rows();
    inst->d = s.X.cols();
    inst->add("X", s.X);
    inst->add("Y", s.Y);
    capture_head(inst, "", s.h);
  }
  const double measured = with_values ? max_abs_diff(head_forward(s.X, s.h, 1.0), head_forward(s.Y, s.h, 1.0))
                                      : max_abs_diff(score_softmax(s.X, s.h, 1.0), score_softmax(s.Y, s.h, 1.0));
  return {measured, (with_values ? K2 : K1) * dxy, std::nullopt, resamples};
}
inline TrialOutcome check_ld_3_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_ld_3(c, r, i, false); }
inline TrialOutcome check_ld_3_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_ld_3(c, r, i, true); }

// Primary reading: one layer is C_l-Lipschitz. Alternate: the literal
// statement, with no ||X_l - Y|| factor.
inline TrialOutcome check_ld_4(const TrialConfig& c, RngStream& rng, Instance* inst) {
  std::size_t resamples = 0;
  const SampledNetwork s = draw_residual_network(c, rng);
  const std::size_t l = rng.uniform_int(0, s.net.depth() - 1);
  const HeadWeights& h = s.net.layers[l].heads[rng.uniform_int(0, s.H - 1)];
  const Mat& X = s.trace.inputs[l];
  const Mat Y = rejection_sample("LD_4", "||Y - X_l|| <= 2||X_l||", resamples, [&]() -> std::optional<Mat> {
    Mat y = X + sample_uniform_matrix(X.rows(), X.cols(), c.eps * unit_fraction(rng), rng);
    if (max_abs_diff(y, X) > 2.0 * norm_inf(X)) return std::nullopt;
    return y;
  });
  const double beta = s.net.resolved_beta();
  const double C = layer_lipschitz_C(c.eta, eps_ell(c.eta, s.phi0, s.H, l));
  capture_sampled(inst, s);
  if (inst) {
    inst->add("Y", Y);
    inst->add("layer", static_cast<double>(l));
  }
  return {max_abs_diff(head_forward(X, h, beta), head_forward(Y, h, beta)), C * max_abs_diff(X, Y), C, resamples};
}

inline TrialOutcome check_ld_5(const TrialConfig& c, RngStream& rng, Instance* inst, bool cumulative) {
  const SampledNetwork s = draw_residual_network(c, rng);
  const double growth = 1.0 + static_cast<double>(s.H) * c.eta;
  Worst w;
  for (std::size_t l = 0; l < s.net.depth(); ++l) {
    const double bound = cumulative ? s.phi0 * std::pow(growth, static_cast<double>(l + 1))
                                    : s.trace.x_norms[l] * growth;
    w.consider(s.trace.x_norms[l + 1], bound);
  }
  capture_sampled(inst, s);
  return w.outcome();
}
inline TrialOutcome check_ld_5_p1(const TrialConfig& c, RngStream& r, Instance* i) { return check_ld_5(c, r, i, false); }
inline TrialOutcome check_ld_5_p2(const TrialConfig& c, RngStream& r, Instance* i) { return check_ld_5(c, r, i, true); }

inline TrialOutcome check_thm_5_3(const TrialConfig& c, RngStream& rng, Instance* inst) {
  const SampledNetwork s = draw_residual_network(c, rng, 2);
  const CollapseResult r = collapse_error(s.net, s.X0, c.slack);
  capture_sampled(inst, s);
  return {r.err_inf, r.bound, std::nullopt, 0};
}

inline Checker checker_for(LemmaId id) {
  switch (id) {
    case LemmaId::FACT_3_2: return check_fact_3_2;
    case LemmaId::FACT_3_3_P1: return check_fact_3_3_p1;
    case LemmaId::FACT_3_3_P2: return check_fact_3_3_p2;
    case LemmaId::FACT_3_3_P3: return check_fact_3_3_p3;
    case LemmaId::L4_1: return check_l4_1;
    case LemmaId::L4_2_P1: return check_l4_2_p1;
    case LemmaId::L4_2_P2: return check_l4_2_p2;
    case LemmaId::L4_2_P3: return check_l4_2_p3;
    case LemmaId::L4_2_P4: return check_l4_2_p4;
    case LemmaId::L4_3_P1: return check_l4_3_p1;
    case LemmaId::L4_3_P2: return check_l4_3_p2;
    case LemmaId::L4_4: return check_l4_4;
    case LemmaId::L5_1: return check_l5_1;
    case LemmaId::L5_2: return check_l5_2;
    case LemmaId::LB_1: return check_lb_1;
    case LemmaId::LB_2: return check_lb_2;
    case LemmaId::LC_1_P1: return check_lc_1_p1;
    case LemmaId::LC_1_P2: return check_lc_1_p2;
    case LemmaId::LC_2_P1: return check_lc_2_p1;
    case LemmaId::LC_2_P2: return check_lc_2_p2;
    case LemmaId::LC_2_P3: return check_lc_2_p3;
    case LemmaId::COR_D_1: return check_cor_d_1;
    case LemmaId::LD_2: return check_ld_2;
    case LemmaId::LD_3_P1: return check_ld_3_p1;
    case LemmaId::LD_3_P2: return check_ld_3_p2;
    case LemmaId::LD_4: return check_ld_4;
    case LemmaId::LD_5_P1: return check_ld_5_p1;
    case LemmaId::LD_5_P2: return check_ld_5_p2;
    case LemmaId::THM_5_3: return check_thm_5_3;
  }
  throw Error("unknown lemma id");
}

inline std::string_view alt_bound_label(LemmaId id) {
  switch (id) {
    case LemmaId::LC_1_P1:
    case LemmaId::LC_1_P2: return "2g(2H eps)";
    case LemmaId::LD_4: return "3eta(eps_l^2+1) without ||X_l-Y|| factor";
    default: return "";
  }
}

// --- hand witnesses --------------------------------------------------------

struct Witness {
  Instance instance;
  double measured;
  double bound;
};

inline std::optional<Witness> hand_witness(LemmaId id) {
  switch (id) {
    case LemmaId::FACT_3_3_P2:
    case LemmaId::FACT_3_3_P3: {
      const Mat A = Mat::ones(2, 2), B = Mat::ones(2, 2);
      const Mat AB = mat_mul(A, B);
      Witness w{{2, 2, {{"A", A}, {"B", B}}, {}}, 0.0, 0.0};
      if (id == LemmaId::FACT_3_3_P2) {
        w.measured = norm_inf(AB);
        w.bound = norm_inf(A) * norm_inf(B);
      } else {
        w.measured = norm_l1(AB);
        w.bound = norm_l1(A) * norm_inf(B);
      }
      return w;
    }
    case LemmaId::L4_1: {
      // one column; the interior entry moves against both endpoints
      const double eps = 0.25;
      const Mat A{{0.0}, {2.0}, {1.0}};
      const Mat B{{eps}, {2.0 + eps}, {1.0 - eps}};
      return Witness{{3, 1, {{"A", A}, {"B", B}}, {{"eps", eps}}}, max_abs_diff(res(A), res(B)), eps};
    }
    default: return std::nullopt;
  }
}

inline unsigned worker_count(const TrialConfig& c) {
  if (c.workers) return static_cast<unsigned>(c.workers);
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, count) on several threads; f writes its own slot.
template <class F>
void parallel_for(std::size_t count, unsigned workers, F&& f) {
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(count, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct TrialBatch {
  std::vector<TrialOutcome> outcomes;
};

inline TrialBatch run_trials(LemmaId id, const TrialConfig& c) {
  const Checker check = checker_for(id);
  TrialBatch b;
  b.outcomes.resize(c.trials);
  parallel_for(c.trials, worker_count(c), [&](std::size_t t) {
    RngStream rng(c.seed, t);
    b.outcomes[t] = check(c, rng, nullptr);
  });
  return b;
}

struct BatchSummary {
  std::size_t violations = 0;
  double max_ratio = 0.0;
  std::size_t worst = 0;
  double worst_severity = -1.0;
  std::size_t resamples = 0;
  std::size_t alt_violations = 0;
  double alt_max_ratio = 0.0;
  std::optional<std::size_t> smallest_violation;  // trial index only; size resolved by caller
};

inline BatchSummary summarize(const TrialBatch& b, double slack) {
  BatchSummary s;
  for (std::size_t t = 0; t < b.outcomes.size(); ++t) {
    const auto& o = b.outcomes[t];
    if (violates(o.measured, o.bound, slack)) ++s.violations;
    if (o.bound > 0.0) s.max_ratio = std::max(s.max_ratio, o.measured / o.bound);
    const double sev = severity(o.measured, o.bound);
    if (sev > s.worst_severity) {
      s.worst_severity = sev;
      s.worst = t;
    }
    s.resamples += o.resamples;
    if (o.alt_bound) {
      if (violates(o.measured, *o.alt_bound, slack)) ++s.alt_violations;
      if (*o.alt_bound > 0.0) s.alt_max_ratio = std::max(s.alt_max_ratio, o.measured / *o.alt_bound);
    }
  }
  return s;
}

}  // namespace detail

/// Re-runs one trial from its stream index, optionally capturing the instance.
inline TrialOutcome replay_trial(LemmaId id, const TrialConfig& cfg, std::uint64_t stream_index,
                                 Instance* capture = nullptr) {
  RngStream rng(cfg.seed, stream_index);
  return detail::checker_for(id)(cfg, rng, capture);
}

inline constexpr std::array<std::size_t, 3> kSweepDims{2, 4, 8};

inline TrialConfig with_fixed_dim(TrialConfig c, std::size_t d) {
  c.d_min = c.d_max = d;
  return c;
}

/// Smallest violating instance: a recorded hand witness if one exists, else the
/// violating random trial with the smallest n + d (ties: lowest trial index).
inline std::optional<Counterexample> find_counterexample(LemmaId id, const TrialConfig& cfg) {
  cfg.validate();
  if (auto w = detail::hand_witness(id); w && violates(w->measured, w->bound, cfg.slack))
    return Counterexample{"hand witness", 0, std::move(w->instance), w->measured, w->bound};
  const detail::TrialBatch b = detail::run_trials(id, cfg);
  std::optional<Counterexample> best;
  for (std::size_t t = 0; t < b.outcomes.size(); ++t) {
    const auto& o = b.outcomes[t];
    if (!violates(o.measured, o.bound, cfg.slack)) continue;
    Instance inst;
    replay_trial(id, cfg, t, &inst);
    if (!best || inst.size_score() < best->instance.size_score())
      best = Counterexample{"trial", t, std::move(inst), o.measured, o.bound};
  }
  return best;
}

inline std::optional<double> thm_eta_slope(const TrialConfig& cfg);

inline LemmaReport check_lemma(LemmaId id, const TrialConfig& cfg) {
  cfg.validate();
  const LemmaInfo& info = lemma_info(id);
  const detail::TrialBatch batch = detail::run_trials(id, cfg);
  const detail::BatchSummary s = detail::summarize(batch, cfg.slack);

  LemmaReport r;
  r.id = id;
  r.cls = info.cls;
  r.trials_run = cfg.trials;
  r.violations = s.violations;
  r.max_ratio = s.max_ratio;
  r.worst_seed = s.worst;
  r.worst_measured = batch.outcomes[s.worst].measured;
  r.worst_bound = batch.outcomes[s.worst].bound;
  r.resamples = s.resamples;
  if (!detail::alt_bound_label(id).empty())
    r.alternate = AltBoundSummary{std::string(detail::alt_bound_label(id)), s.alt_violations, s.alt_max_ratio};

  if (info.cls == CheckClass::Audit) {
    for (std::size_t d : kSweepDims) {
      const TrialConfig cd = with_fixed_dim(cfg, d);
      const detail::BatchSummary sd = detail::summarize(detail::run_trials(id, cd), cfg.slack);
      r.dimension_sweep.push_back({d, cd.trials, sd.violations, sd.max_ratio});
    }
  }
  if (detail::hand_witness(id) || s.violations > 0) r.counterexample = find_counterexample(id, cfg);
  if (id == LemmaId::THM_5_3) r.eta_slope = thm_eta_slope(cfg);
  return r;
}

/// Log-log slope of median relative collapse error against eta, from paired
/// trials at eta/4, eta/2 and eta.
inline std::optional<double> thm_eta_slope(const TrialConfig& cfg) {
  if (!(cfg.eta > 0.0)) return std::nullopt;
  const Vec etas{cfg.eta / 4.0, cfg.eta / 2.0, cfg.eta};
  const std::size_t trials = std::min<std::size_t>(cfg.trials, 200);
  Vec medians;
  for (double eta : etas) {
    Vec rel;
    for (std::size_t t = 0; t < trials; ++t) {
      TrialConfig c = cfg;
      c.eta = eta;
      RngStream rng(cfg.seed, t);
      const detail::SampledNetwork s = detail::draw_residual_network(c, rng, 2);
      rel.push_back(collapse_error(s.net, s.X0, cfg.slack).rel_err);
    }
    medians.push_back(median(rel));
  }
  try {
    return fit_loglog(etas, medians).slope;
  } catch (const Error&) {
    return std::nullopt;
  }
}

struct SuiteResult {
  std::vector<LemmaReport> reports;
  bool robust_ok = true;
};

inline SuiteResult run_suite(const TrialConfig& cfg, const std::vector<LemmaId>& ids) {
  if (ids.empty()) throw Error("run_suite: no lemma ids selected");
  SuiteResult out;
  for (LemmaId id : ids) {
    out.reports.push_back(check_lemma(id, cfg));
    if (out.reports.back().failed()) out.robust_ok = false;
  }
  return out;
}

}  // namespace attnlab
