// attnlab command-line front end. run_cli takes the arguments after the
// program name and returns the process exit code.
#pragma once

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnlab/attention.hpp"
#include "attnlab/collapse.hpp"
#include "attnlab/io.hpp"
#include "attnlab/verifier.hpp"

namespace attnlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kSeedEnv = "ATTNLAB_SEED";

/// Default seed: ATTNLAB_SEED if set, else 1. An explicit --seed overrides it.
inline std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  if (!env || !*env) return 1;
  std::uint64_t v = 0;
  const std::string_view s(env);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(std::string(kSeedEnv) + " is not an unsigned integer: '" + env + "'");
  return v;
}

inline std::string join_command(const std::vector<std::string>& args) {
  std::string s = "attnlab";
  for (const auto& a : args) s += " " + a;
  return s;
}

/// Comma-separated list; empty lists and empty or malformed items are rejected.
template <class T>
std::vector<T> parse_list(const std::string& flag, const std::string& text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t c = text.find(',', start);
    const std::string item = text.substr(start, c == std::string::npos ? std::string::npos : c - start);
    T v{};
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size())
      throw Error(flag + ": cannot parse list item '" + item + "' in '" + text + "'");
    out.push_back(v);
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return out;
}

struct VerifyOpts {
  std::string lemma = "robust";
  std::string out;
  TrialConfig cfg;
};

inline int run_verify(const VerifyOpts& o, const RunManifest& m, std::ostream& out) {
  const SuiteResult s = run_suite(o.cfg, lemma_selection(o.lemma));
  for (const auto& r : s.reports) {
    out << lemma_name(r.id) << " [" << class_name(r.cls) << "] trials=" << r.trials_run
        << " violations=" << r.violations << " max_ratio=" << format_real(r.max_ratio)
        << " worst_seed=" << r.worst_seed;
    if (r.alternate)
      out << " alt_violations=" << r.alternate->violations << " alt_max_ratio=" << format_real(r.alternate->max_ratio);
    if (r.eta_slope) out << " eta_slope=" << format_real(*r.eta_slope);
    out << "\n";
    for (const auto& p : r.dimension_sweep)
      out << "  d=" << p.d << " violations=" << p.violations << " max_ratio=" << format_real(p.max_ratio) << "\n";
  }
  out << (s.robust_ok ? "robust checks: pass\n" : "robust checks: FAIL\n");
  if (!o.out.empty()) write_text_file(o.out, suite_to_string(s, o.cfg, m));
  return s.robust_ok ? kExitOk : kExitViolation;
}

inline void print_sweep_summary(const SweepResult& r, std::ostream& out) {
  for (const auto& p : r.points)
    out << "eta=" << format_real(p.eta) << " L=" << p.L << " H=" << p.H
        << " median_rel_err=" << format_real(p.median_rel_err) << " bound_exceedances=" << p.bound_exceedances
        << (p.regime_warning ? " (eps_ell outside (0,1))" : "") << "\n";
  for (const auto& s : r.slopes)
    out << "L=" << s.L << " H=" << s.H << " loglog_slope=" << format_real(s.slope)
        << " median_strictly_increasing=" << bool_str(s.median_strictly_increasing) << "\n";
}

inline NetworkSpec load_network_checked(const std::string& path) {
  NetworkFile f = read_network(path);
  f.net.validate();
  return std::move(f.net);
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Self-attention layer-collapse and inequality audit toolkit", "attnlab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::uint64_t seed = 1;
  try {
    seed = default_seed();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  // verify
  VerifyOpts vo;
  vo.cfg.seed = seed;
  auto* verify = app.add_subcommand("verify", "Property-test the inequality suite");
  verify->add_option("--lemma", vo.lemma, "Lemma id, or robust | audit | all")->capture_default_str();
  verify->add_option("--trials", vo.cfg.trials, "Trials per lemma")->capture_default_str();
  verify->add_option("--seed", vo.cfg.seed, "Root seed");
  verify->add_option("--n-min", vo.cfg.n_min)->capture_default_str();
  verify->add_option("--n-max", vo.cfg.n_max)->capture_default_str();
  verify->add_option("--d-min", vo.cfg.d_min)->capture_default_str();
  verify->add_option("--d-max", vo.cfg.d_max)->capture_default_str();
  verify->add_option("--eta", vo.cfg.eta, "Weight entry bound")->capture_default_str();
  verify->add_option("--eps", vo.cfg.eps, "Perturbation bound")->capture_default_str();
  verify->add_option("--phi0", vo.cfg.phi0, "Input entry bound")->capture_default_str();
  verify->add_option("--max-layers", vo.cfg.max_layers)->capture_default_str();
  verify->add_option("--max-heads", vo.cfg.max_heads)->capture_default_str();
  verify->add_option("--slack", vo.cfg.slack, "Relative tolerance")->capture_default_str();
  verify->add_option("--workers", vo.cfg.workers, "Worker threads (0 = all cores)")->capture_default_str();
  verify->add_option("--out", vo.out, "Report path (JSON)");

  // collapse and sweep share the grid
  SweepGrid grid;
  grid.seed = seed;
  grid.trials = 200;
  double c_eta = 0.01;
  std::size_t c_layers = 4, c_heads = 2;
  std::string csv_path;
  auto* collapse = app.add_subcommand("collapse", "Collapse error at one (L, H, eta) point");
  collapse->add_option("--layers", c_layers)->capture_default_str();
  collapse->add_option("--heads", c_heads)->capture_default_str();
  collapse->add_option("--n", grid.n)->capture_default_str();
  collapse->add_option("--d", grid.d)->capture_default_str();
  collapse->add_option("--eta", c_eta)->capture_default_str();
  collapse->add_option("--phi0", grid.phi0)->capture_default_str();
  collapse->add_option("--trials", grid.trials)->capture_default_str();
  collapse->add_option("--seed", grid.seed);
  collapse->add_option("--csv", csv_path, "Output CSV path");

  auto* sweep = app.add_subcommand("sweep", "Collapse error over an (eta, L, H) grid");
  std::string eta_list, layers_list, heads_list;
  sweep->add_option("--eta-list", eta_list, "Comma-separated eta values")->required();
  sweep->add_option("--layers-list", layers_list, "Comma-separated layer counts")->required();
  sweep->add_option("--heads-list", heads_list, "Comma-separated head counts")->required();
  sweep->add_option("--n", grid.n)->capture_default_str();
  sweep->add_option("--d", grid.d)->capture_default_str();
  sweep->add_option("--phi0", grid.phi0)->capture_default_str();
  sweep->add_option("--trials", grid.trials)->capture_default_str();
  sweep->add_option("--seed", grid.seed);
  sweep->add_option("--csv", csv_path, "Output CSV path");

  RankCollapseConfig rc;
  rc.seed = seed;
  auto* rank = app.add_subcommand("rank-collapse", "Res-norm decay in networks without skip connections");
  rank->add_option("--layers", rc.layers)->capture_default_str();
  rank->add_option("--heads", rc.heads)->capture_default_str();
  rank->add_option("--n", rc.n)->capture_default_str();
  rank->add_option("--d", rc.d)->capture_default_str();
  rank->add_option("--eta", rc.eta)->capture_default_str();
  rank->add_option("--phi0", rc.phi0)->capture_default_str();
  rank->add_option("--beta", rc.beta, "Score scale (default 1/sqrt(d))");
  rank->add_option("--trials", rc.trials)->capture_default_str();
  rank->add_option("--seed", rc.seed);
  rank->add_option("--csv", csv_path, "Output CSV path");

  auto* net = app.add_subcommand("net", "Generate, show or validate network files");
  net->require_subcommand(1);
  std::string net_path;
  std::size_t g_layers = 2, g_heads = 1, g_d = 4;
  std::optional<std::size_t> g_n;
  double g_eta = 0.1;
  std::optional<double> g_beta;
  bool g_no_residual = false;
  std::uint64_t g_seed = seed;
  auto* gen = net->add_subcommand("gen", "Write a random network");
  gen->add_option("file", net_path)->required();
  gen->add_option("--layers", g_layers)->capture_default_str();
  gen->add_option("--heads", g_heads)->capture_default_str();
  gen->add_option("--d", g_d)->capture_default_str();
  gen->add_option("--n", g_n, "Recorded token count");
  gen->add_option("--eta", g_eta)->capture_default_str();
  gen->add_option("--beta", g_beta, "Explicit score scale");
  gen->add_flag("--no-residual", g_no_residual);
  gen->add_option("--seed", g_seed);
  auto* show = net->add_subcommand("show", "Summarize a network file");
  show->add_option("file", net_path)->required()->check(CLI::ExistingFile);
  auto* validate = net->add_subcommand("validate", "Check a network file against the schema");
  validate->add_option("file", net_path)->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  RunManifest m;
  m.command_line = join_command(args);
  m.timestamp = RunManifest::utc_now();

  try {
    if (*verify) {
      m.seed = vo.cfg.seed;
      return run_verify(vo, m, out);
    }
    if (*collapse || *sweep) {
      if (*collapse) {
        grid.etas = {c_eta};
        grid.layers = {c_layers};
        grid.heads = {c_heads};
      } else {
        grid.etas = parse_list<double>("--eta-list", eta_list);
        grid.layers = parse_list<std::size_t>("--layers-list", layers_list);
        grid.heads = parse_list<std::size_t>("--heads-list", heads_list);
      }
      m.seed = grid.seed;
      const SweepResult r = eta_sweep(grid);
      print_sweep_summary(r, out);
      if (!csv_path.empty()) write_text_file(csv_path, sweep_csv(r, m));
      return kExitOk;
    }
    if (*rank) {
      m.seed = rc.seed;
      const RankCollapseResult r = rank_collapse_experiment(rc);
      out << "mean ||Res(X_l)||_inf:";
      for (double v : r.mean_res_norms) out << " " << format_real(v);
      out << "\nfraction strictly decreasing: " << format_real(r.fraction_strictly_decreasing)
          << "\nlog(-log) slope: " << format_real(r.log_neg_log_fit.slope)
          << (r.regime_ok ? "" : "\nwarning: eps_ell outside (0,1)") << "\n";
      if (!csv_path.empty()) write_text_file(csv_path, rank_collapse_csv(r, m));
      return kExitOk;
    }
    if (*gen) {
      RngStream rng(g_seed, 0);
      const Beta beta = g_beta ? Beta::explicit_value(*g_beta) : Beta::inv_sqrt_d();
      const NetworkSpec spec = sample_network(g_d, g_layers, g_heads, g_eta, !g_no_residual, rng, beta);
      spec.validate();
      write_network(net_path, spec, g_n);
      out << "wrote " << net_path << "\n";
      return kExitOk;
    }
    if (*show) {
      const NetworkSpec spec = load_network_checked(net_path);
      out << "d=" << spec.d << " layers=" << spec.depth() << " beta=" << format_real(spec.resolved_beta())
          << (spec.beta.mode == Beta::Mode::InvSqrtD ? " (inv_sqrt_d)" : "") << "\n";
      for (std::size_t l = 0; l < spec.depth(); ++l) {
        out << "layer " << l << ": heads=" << spec.layers[l].heads.size()
            << " residual=" << bool_str(spec.layers[l].residual);
        double w = 0.0;
        for (const auto& h : spec.layers[l].heads) w = std::max(w, h.max_weight_norm());
        out << " max_weight_inf=" << format_real(w) << "\n";
      }
      return kExitOk;
    }
    if (*validate) {
      load_network_checked(net_path);
      out << net_path << ": ok\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace attnlab::cli
