// Closed-form constants and bounds for the layer-collapse argument, so that
// measured quantities can be compared against theory.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "attnlab/linalg.hpp"

namespace attnlab {

/// g(eps) = 2(e^eps - 1)
inline double g_of(double eps) {
  if (!(eps >= 0.0)) throw Error("g_of: eps must be >= 0");
  return 2.0 * std::expm1(eps);
}

/// Res contraction factor (e^theta - 1) ||Wv||_inf.
inline double contraction_K(double theta, double wv_inf) {
  if (!(theta >= 0.0) || !(wv_inf >= 0.0)) throw Error("contraction_K: arguments must be >= 0");
  return std::expm1(theta) * wv_inf;
}

/// Per-layer perturbation budget 2 eta phi0 (1 + H eta)^ell.
inline double eps_ell(double eta, double phi0, std::size_t heads, std::size_t ell) {
  if (!(eta >= 0.0) || !(phi0 >= 0.0)) throw Error("eps_ell: eta and phi0 must be >= 0");
  return 2.0 * eta * phi0 * std::pow(1.0 + static_cast<double>(heads) * eta, static_cast<double>(ell));
}

/// eps_ell outside (0, 1) leaves the regime the layer-deletion argument assumes.
inline bool eps_in_regime(double eps) { return eps > 0.0 && eps < 1.0; }

struct LipschitzConstants {
  double K1;  // score-softmax Lipschitz constant
  double K2;  // softmv Lipschitz constant
};

/// K1 = 12 ||X|| ||W||, K2 = K1 ||X|| ||Wv|| + ||Wv||.
inline LipschitzConstants lipschitz_constants(double x_inf, double w_inf, double wv_inf) {
  if (!(x_inf >= 0.0) || !(w_inf >= 0.0) || !(wv_inf >= 0.0))
    throw Error("lipschitz_constants: arguments must be >= 0");
  const double k1 = 12.0 * x_inf * w_inf;
  return {k1, k1 * x_inf * wv_inf + wv_inf};
}

/// Per-layer Lipschitz constant 3 eta (eps_l^2 + 1).
inline double layer_lipschitz_C(double eta, double eps_l) {
  if (!(eta >= 0.0) || !(eps_l >= 0.0)) throw Error("layer_lipschitz_C: arguments must be >= 0");
  return 3.0 * eta * (eps_l * eps_l + 1.0);
}

/// Single-head skip bound 2 g(2 eps).
inline double single_head_skip_bound(double eps) { return 2.0 * g_of(2.0 * eps); }

/// Multi-head skip bound as stated, 3 g(2 H eps).
inline double multi_head_skip_bound_stated(std::size_t heads, double eps) {
  return 3.0 * g_of(2.0 * static_cast<double>(heads) * eps);
}

/// Multi-head skip bound the derivation actually reaches, 2 g(2 H eps).
inline double multi_head_skip_bound_derived(std::size_t heads, double eps) {
  return 2.0 * g_of(2.0 * static_cast<double>(heads) * eps);
}

struct BoundParams {
  double eta = 0.0;
  double phi0 = 0.0;
  std::size_t heads = 1;
  std::size_t layers = 1;
};

enum class BoundTerms {
  LPlusOne,  // delta * (C^L + ... + C + 1); default
  L,         // delta * (C^{L-1} + ... + 1)
};

struct BoundReport {
  BoundParams params;
  BoundTerms terms = BoundTerms::LPlusOne;
  Vec eps_ell;  // eps_0..eps_L
  double delta = 0.0;
  double C = 0.0;
  double final_bound = 0.0;
  bool regime_warning = false;  // some eps_ell outside (0, 1)
};

inline BoundReport theorem_bound(const BoundParams& p, BoundTerms terms = BoundTerms::LPlusOne) {
  if (!(p.eta >= 0.0) || !(p.phi0 >= 0.0) || p.heads == 0 || p.layers == 0)
    throw Error("theorem_bound: eta, phi0 must be >= 0 and H, L positive");
  BoundReport r;
  r.params = p;
  r.terms = terms;
  for (std::size_t ell = 0; ell <= p.layers; ++ell) {
    const double e = eps_ell(p.eta, p.phi0, p.heads, ell);
    r.eps_ell.push_back(e);
    r.delta = std::max(r.delta, 2.0 * g_of(2.0 * static_cast<double>(p.heads) * e));
    r.C = std::max(r.C, layer_lipschitz_C(p.eta, e));
    if (!eps_in_regime(e)) r.regime_warning = true;
  }
  const std::size_t n_terms = terms == BoundTerms::LPlusOne ? p.layers + 1 : p.layers;
  double sum = 0.0, power = 1.0;
  for (std::size_t i = 0; i < n_terms; ++i) {
    sum += power;
    power *= r.C;
  }
  r.final_bound = r.delta * sum;
  return r;
}

struct PriorRankRate {
  std::uint64_t exponent;  // (3^L - 1) / 2
  double rate;             // beta^exponent, unit constant
};

/// Doubly exponential rank-collapse rate beta^((3^L - 1)/2) for networks without skips.
inline PriorRankRate prior_rank_rate(double beta_l1, std::size_t layers) {
  if (layers == 0) throw Error("prior_rank_rate: L must be >= 1");
  if (layers > 39) throw Error("prior_rank_rate: L too large for a 64-bit exponent");
  std::uint64_t p = 1;
  for (std::size_t i = 0; i < layers; ++i) p *= 3;
  const std::uint64_t e = (p - 1) / 2;
  return {e, std::pow(beta_l1, static_cast<double>(e))};
}

/// Largest beta for which E = beta Res(X) W Res(X)^T is claimed 1-balanced.
inline double beta_threshold(double res_x_inf, double eta) {
  if (!(res_x_inf > 0.0) || !(eta > 0.0)) throw Error("beta_threshold: inputs must be > 0");
  return 1.0 / (res_x_inf * res_x_inf * eta * eta);
}

}  // namespace attnlab
