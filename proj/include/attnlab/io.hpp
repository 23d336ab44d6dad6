// File formats: network documents, audit reports, run manifests and CSV tables.
//
// Networks and reports are JSON. Reals are written in shortest round-trip form,
// so write-then-read is bit-exact. CSV files start with "#" manifest lines,
// then a header row, then data rows, then "#" summary lines.
#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attnlab/attention.hpp"
#include "attnlab/collapse.hpp"
#include "attnlab/linalg.hpp"
#include "attnlab/verifier.hpp"

namespace attnlab {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr int kNetworkSchemaVersion = 1;

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// files

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// networks

inline Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (double v : m.row(i)) r.push_back(v);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw Error("network schema: " + path + ": " + what);
}

inline const Json& require_field(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + "." + key, "missing field");
  return *it;
}

inline double json_real(const Json& v, const std::string& path) {
  if (!v.is_number()) schema_error(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) schema_error(path, "non-finite number");
  return x;
}

inline std::size_t json_count(const Json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    schema_error(path, "expected a non-negative integer");
  return v.get<std::size_t>();
}

inline Vec json_vec(const Json& v, const std::string& path) {
  if (!v.is_array()) schema_error(path, "expected an array");
  Vec out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(json_real(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Mat json_mat(const Json& v, const std::string& path, std::size_t d) {
  if (!v.is_array() || v.empty()) schema_error(path, "expected a non-empty 2-D array");
  Vec data;
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    const Vec r = json_vec(v[i], rp);
    if (i == 0) cols = r.size();
    if (r.size() != cols || cols == 0) schema_error(rp, "ragged row");
    data.insert(data.end(), r.begin(), r.end());
  }
  if (rows != d || cols != d)
    schema_error(path, "expected shape " + shape_str(d, d) + ", got " + shape_str(rows, cols));
  return Mat(rows, cols, std::move(data));
}

}  // namespace detail

inline Json network_to_json(const NetworkSpec& net, std::optional<std::size_t> n = std::nullopt) {
  Json j;
  j["schema_version"] = kNetworkSchemaVersion;
  if (n) j["n"] = *n;
  j["d"] = net.d;
  if (net.beta.mode == Beta::Mode::InvSqrtD)
    j["beta"] = "inv_sqrt_d";
  else
    j["beta"] = net.beta.value;
  Json layers = Json::array();
  for (const auto& l : net.layers) {
    Json lj;
    lj["residual"] = l.residual;
    Json heads = Json::array();
    for (const auto& h : l.heads) {
      Json hj;
      hj["Wq"] = mat_to_json(h.Wq);
      hj["Wk"] = mat_to_json(h.Wk);
      hj["Wv"] = mat_to_json(h.Wv);
      if (h.bq) hj["bq"] = vec_to_json(*h.bq);
      if (h.bk) hj["bk"] = vec_to_json(*h.bk);
      heads.push_back(std::move(hj));
    }
    lj["heads"] = std::move(heads);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

struct NetworkFile {
  NetworkSpec net;
  std::optional<std::size_t> n;
};

inline NetworkFile network_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) schema_error("$", "expected an object");
  const Json& ver = require_field(j, "schema_version", "$");
  if (!ver.is_number_integer() || ver.get<std::int64_t>() != kNetworkSchemaVersion)
    schema_error("schema_version", "unsupported version (expected " + std::to_string(kNetworkSchemaVersion) + ")");
  NetworkFile f;
  if (j.contains("n")) f.n = json_count(j["n"], "n");
  f.net.d = json_count(require_field(j, "d", "$"), "d");
  if (f.net.d == 0) schema_error("d", "must be positive");
  if (j.contains("beta")) {
    const Json& b = j["beta"];
    if (b.is_string()) {
      if (b.get<std::string>() != "inv_sqrt_d") schema_error("beta", "expected \"inv_sqrt_d\" or a number");
      f.net.beta = Beta::inv_sqrt_d();
    } else {
      const double v = json_real(b, "beta");
      if (!(v > 0.0)) schema_error("beta", "must be > 0");
      f.net.beta = Beta::explicit_value(v);
    }
  }
  const Json& layers = require_field(j, "layers", "$");
  if (!layers.is_array() || layers.empty()) schema_error("layers", "expected a non-empty array");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = "layers[" + std::to_string(l) + "]";
    LayerSpec spec;
    const Json& res = require_field(layers[l], "residual", lp);
    if (!res.is_boolean()) schema_error(lp + ".residual", "expected a boolean");
    spec.residual = res.get<bool>();
    const Json& heads = require_field(layers[l], "heads", lp);
    if (!heads.is_array() || heads.empty()) schema_error(lp + ".heads", "expected a non-empty array");
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const std::string hp = lp + ".heads[" + std::to_string(h) + "]";
      HeadWeights w;
      w.Wq = json_mat(require_field(heads[h], "Wq", hp), hp + ".Wq", f.net.d);
      w.Wk = json_mat(require_field(heads[h], "Wk", hp), hp + ".Wk", f.net.d);
      w.Wv = json_mat(require_field(heads[h], "Wv", hp), hp + ".Wv", f.net.d);
      for (const char* key : {"bq", "bk"}) {
        if (!heads[h].contains(key)) continue;
        Vec b = json_vec(heads[h][key], hp + "." + key);
        if (b.size() != f.net.d)
          schema_error(hp + "." + key, "expected length " + std::to_string(f.net.d) + ", got " + std::to_string(b.size()));
        (key[1] == 'q' ? w.bq : w.bk) = std::move(b);
      }
      spec.heads.push_back(std::move(w));
    }
    f.net.layers.push_back(std::move(spec));
  }
  return f;
}

inline std::string network_to_string(const NetworkSpec& net, std::optional<std::size_t> n = std::nullopt) {
  return network_to_json(net, n).dump(2) + "\n";
}

inline NetworkFile network_from_string(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("network document is not valid JSON: ") + e.what());
  }
  return network_from_json(j);
}

inline void write_network(const std::string& path, const NetworkSpec& net, std::optional<std::size_t> n = std::nullopt) {
  write_text_file(path, network_to_string(net, n));
}

inline NetworkFile read_network(const std::string& path) { return network_from_string(read_text_file(path)); }

// ---------------------------------------------------------------------------
// run manifest

struct RunManifest {
  std::string command_line;
  std::uint64_t seed = 0;
  std::string rng = std::string(RngStream::algorithm);
  std::string version = std::string(kToolVersion);
  std::string timestamp;

  static std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  Json to_json() const {
    Json j;
    j["command_line"] = command_line;
    j["seed"] = seed;
    j["rng"] = rng;
    j["version"] = version;
    j["timestamp"] = timestamp;
    return j;
  }

  /// "#" comment lines, one field per line.
  std::string comment_lines() const {
    std::string s;
    s += "# command_line: " + command_line + "\n";
    s += "# seed: " + std::to_string(seed) + "\n";
    s += "# rng: " + rng + "\n";
    s += "# version: " + version + "\n";
    s += "# timestamp: " + timestamp + "\n";
    return s;
  }
};

// ---------------------------------------------------------------------------
// audit reports

inline std::string_view class_name(CheckClass c) { return c == CheckClass::Robust ? "robust" : "audit"; }

inline Json instance_to_json(const Instance& inst) {
  Json j;
  j["n"] = inst.n;
  j["d"] = inst.d;
  Json m = Json::object();
  for (const auto& [name, mat] : inst.matrices) m[name] = mat_to_json(mat);
  j["matrices"] = std::move(m);
  Json s = Json::object();
  for (const auto& [name, v] : inst.scalars) s[name] = v;
  j["scalars"] = std::move(s);
  return j;
}

inline Json config_to_json(const TrialConfig& c) {
  Json j;
  j["n_min"] = c.n_min;
  j["n_max"] = c.n_max;
  j["d_min"] = c.d_min;
  j["d_max"] = c.d_max;
  j["eta"] = c.eta;
  j["eps"] = c.eps;
  j["phi0"] = c.phi0;
  j["logit_scale"] = c.logit_scale;
  j["max_layers"] = c.max_layers;
  j["max_heads"] = c.max_heads;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["slack"] = c.slack;
  return j;
}

inline Json report_to_json(const LemmaReport& r) {
  const LemmaInfo& info = lemma_info(r.id);
  Json j;
  j["id"] = info.name;
  j["class"] = class_name(r.cls);
  j["statement"] = info.statement;
  j["trials_run"] = r.trials_run;
  j["violations"] = r.violations;
  j["max_ratio"] = r.max_ratio;
  j["worst_seed"] = r.worst_seed;
  j["worst_measured"] = r.worst_measured;
  j["worst_bound"] = r.worst_bound;
  j["resamples"] = r.resamples;
  if (r.alternate) {
    Json a;
    a["label"] = r.alternate->label;
    a["violations"] = r.alternate->violations;
    a["max_ratio"] = r.alternate->max_ratio;
    j["alternate_bound"] = std::move(a);
  }
  if (!r.dimension_sweep.empty()) {
    Json sw = Json::array();
    for (const auto& p : r.dimension_sweep) {
      Json pj;
      pj["d"] = p.d;
      pj["trials"] = p.trials;
      pj["violations"] = p.violations;
      pj["max_ratio"] = p.max_ratio;
      sw.push_back(std::move(pj));
    }
    j["dimension_sweep"] = std::move(sw);
  }
  if (r.counterexample) {
    Json c;
    c["source"] = r.counterexample->source;
    c["stream_index"] = r.counterexample->stream_index;
    c["measured"] = r.counterexample->measured;
    c["bound"] = r.counterexample->bound;
    c["instance"] = instance_to_json(r.counterexample->instance);
    j["counterexample"] = std::move(c);
  }
  if (r.eta_slope) j["eta_slope"] = *r.eta_slope;
  return j;
}

inline std::string suite_to_string(const SuiteResult& s, const TrialConfig& cfg, const RunManifest& m) {
  Json j;
  j["manifest"] = m.to_json();
  j["config"] = config_to_json(cfg);
  j["robust_ok"] = s.robust_ok;
  Json reports = Json::array();
  for (const auto& r : s.reports) reports.push_back(report_to_json(r));
  j["reports"] = std::move(reports);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kSweepCsvHeader =
    "eta,L,H,n,d,phi0,trial,seed,err_inf,x_inf,rel_err,delta,C,paper_bound,bound_ok";

/// One row per (trial, layer) of the no-residual experiment.
inline constexpr std::string_view kRankCollapseCsvHeader = "trial,layer,res_inf,x_inf,strictly_decreasing";

inline std::string_view bool_str(bool b) { return b ? "true" : "false"; }

inline std::string sweep_row_csv(const SweepRow& r) {
  std::string s;
  auto put = [&](const std::string& v) {
    if (!s.empty()) s += ',';
    s += v;
  };
  put(format_real(r.eta));
  put(std::to_string(r.L));
  put(std::to_string(r.H));
  put(std::to_string(r.n));
  put(std::to_string(r.d));
  put(format_real(r.phi0));
  put(std::to_string(r.trial));
  put(std::to_string(r.seed));
  put(format_real(r.err_inf));
  put(format_real(r.x_inf));
  put(format_real(r.rel_err));
  put(format_real(r.delta));
  put(format_real(r.C));
  put(format_real(r.paper_bound));
  put(std::string(bool_str(r.bound_ok)));
  return s;
}

inline std::string sweep_csv(const SweepResult& res, const RunManifest& m) {
  std::string s = m.comment_lines();
  s += kSweepCsvHeader;
  s += '\n';
  for (const auto& r : res.rows) s += sweep_row_csv(r) + '\n';
  for (const auto& p : res.points)
    s += "# point eta=" + format_real(p.eta) + " L=" + std::to_string(p.L) + " H=" + std::to_string(p.H) +
         " median_rel_err=" + format_real(p.median_rel_err) + " bound_exceedances=" +
         std::to_string(p.bound_exceedances) + " regime_warning=" + std::string(bool_str(p.regime_warning)) + "\n";
  for (const auto& sl : res.slopes)
    s += "# slope L=" + std::to_string(sl.L) + " H=" + std::to_string(sl.H) + " loglog_slope=" +
         format_real(sl.slope) + " median_strictly_increasing=" + std::string(bool_str(sl.median_strictly_increasing)) +
         "\n";
  for (const auto& w : res.warnings) s += "# warning: " + w + "\n";
  return s;
}

inline std::string rank_collapse_csv(const RankCollapseResult& res, const RunManifest& m) {
  std::string s = m.comment_lines();
  s += kRankCollapseCsvHeader;
  s += '\n';
  for (const auto& r : res.rows)
    for (std::size_t l = 0; l < r.res_norms.size(); ++l)
      s += std::to_string(r.trial) + "," + std::to_string(l) + "," + format_real(r.res_norms[l]) + "," +
           format_real(r.x_norms[l]) + "," + std::string(bool_str(r.strictly_decreasing)) + "\n";
  s += "# mean_res_inf";
  for (double v : res.mean_res_norms) s += " " + format_real(v);
  s += "\n# fraction_strictly_decreasing " + format_real(res.fraction_strictly_decreasing) + "\n";
  s += "# log_neg_log_slope " + format_real(res.log_neg_log_fit.slope) + "\n";
  s += "# eps_ell";
  for (double v : res.eps_ell) s += " " + format_real(v);
  s += "\n# regime_ok " + std::string(bool_str(res.regime_ok)) + "\n";
  return s;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t c = line.find(',', start);
    out.push_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, std::size_t line_no) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("csv line " + std::to_string(line_no) + ": cannot parse '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Parses a sweep CSV back into rows, skipping "#" lines.
inline std::vector<SweepRow> parse_sweep_csv(std::string_view text) {
  using detail::parse_number;
  std::vector<SweepRow> rows;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kSweepCsvHeader) throw Error("csv: unexpected header '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 15) throw Error("csv line " + std::to_string(line_no) + ": expected 15 fields");
    SweepRow r{};
    r.eta = parse_number<double>(f[0], line_no);
    r.L = parse_number<std::size_t>(f[1], line_no);
    r.H = parse_number<std::size_t>(f[2], line_no);
    r.n = parse_number<std::size_t>(f[3], line_no);
    r.d = parse_number<std::size_t>(f[4], line_no);
    r.phi0 = parse_number<double>(f[5], line_no);
    r.trial = parse_number<std::size_t>(f[6], line_no);
    r.seed = parse_number<std::uint64_t>(f[7], line_no);
    r.err_inf = parse_number<double>(f[8], line_no);
    r.x_inf = parse_number<double>(f[9], line_no);
    r.rel_err = parse_number<double>(f[10], line_no);
    r.delta = parse_number<double>(f[11], line_no);
    r.C = parse_number<double>(f[12], line_no);
    r.paper_bound = parse_number<double>(f[13], line_no);
    if (f[14] != "true" && f[14] != "false") throw Error("csv line " + std::to_string(line_no) + ": bad bound_ok");
    r.bound_ok = f[14] == "true";
    rows.push_back(r);
  }
  if (!header_seen) throw Error("csv: missing header");
  return rows;
}

}  // namespace attnlab
