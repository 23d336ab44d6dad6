#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "attnlab/io.hpp"

using namespace attnlab;

namespace {

std::string drop_timestamp(const std::string& s) {
  std::string out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find('\n', pos);
    if (end == std::string::npos) end = s.size();
    const std::string line = s.substr(pos, end - pos);
    if (line.find("timestamp") == std::string::npos) out += line + "\n";
    pos = end + 1;
  }
  return out;
}

std::string error_of(const std::string& doc) {
  try {
    network_from_string(doc);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

RunManifest manifest() {
  RunManifest m;
  m.command_line = "attnlab test";
  m.seed = 9;
  m.timestamp = RunManifest::utc_now();
  return m;
}

}  // namespace

TEST(NetworkFile, RoundTripIsBitExact) {
  RngStream r(41, 0);
  NetworkSpec net = sample_network(5, 3, 2, 0.37, true, r);
  net.layers[1].residual = false;
  net.layers[2].heads[1].bq = sample_uniform_vector(5, 1.0, r);
  net.layers[2].heads[1].bk = sample_uniform_vector(5, 1e-7, r);
  const std::string text = network_to_string(net, 7);
  const NetworkFile f = network_from_string(text);
  EXPECT_EQ(f.net, net);
  EXPECT_EQ(f.n, std::optional<std::size_t>(7));
  EXPECT_EQ(network_to_string(f.net, f.n), text);

  NetworkSpec explicit_beta = net;
  explicit_beta.beta = Beta::explicit_value(0.1);
  EXPECT_EQ(network_from_string(network_to_string(explicit_beta)).net, explicit_beta);
}

TEST(NetworkFile, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "attnlab_net_test.json").string();
  RngStream r(42, 0);
  const NetworkSpec net = sample_network(3, 2, 1, 0.2, true, r);
  write_network(path, net);
  EXPECT_EQ(read_network(path).net, net);
  std::remove(path.c_str());
  EXPECT_THROW(read_network(path), Error);
}

TEST(NetworkFile, InvSqrtDResolvesAtLoad) {
  std::string w = "[";
  for (int i = 0; i < 16; ++i) {
    w += i ? ",[" : "[";
    for (int j = 0; j < 16; ++j) w += j ? ",0" : "0";
    w += "]";
  }
  w += "]";
  const std::string doc = R"({"schema_version":1,"d":16,"beta":"inv_sqrt_d","layers":[{"residual":true,"heads":[{"Wq":)" +
                          w + ",\"Wk\":" + w + ",\"Wv\":" + w + "}]}]}";
  const NetworkFile f = network_from_string(doc);
  EXPECT_EQ(f.net.resolved_beta(), 0.25);
}

TEST(NetworkFile, SchemaErrorsNameTheField) {
  const std::string good_head = R"({"Wq":[[1,0],[0,1]],"Wk":[[1,0],[0,1]],"Wv":[[1,0],[0,1]]})";
  auto doc = [](const std::string& head, const std::string& extra = "") {
    return R"({"schema_version":1,"d":2)" + extra + R"(,"layers":[{"residual":true,"heads":[)" + head + "]}]}";
  };
  EXPECT_EQ(error_of(doc(good_head)), "");
  EXPECT_NE(error_of(doc(R"({"Wq":[[1,0,0],[0,1,0]],"Wk":[[1,0],[0,1]],"Wv":[[1,0],[0,1]]})"))
                .find("layers[0].heads[0].Wq"),
            std::string::npos);
  EXPECT_NE(error_of(doc(R"({"Wq":[[1,0],[0]],"Wk":[[1,0],[0,1]],"Wv":[[1,0],[0,1]]})")).find("layers[0].heads[0].Wq[1]"),
            std::string::npos);
  EXPECT_NE(error_of(doc(R"({"Wq":[[1,0],[0,1]],"Wk":[[1,0],[0,1]]})")).find("layers[0].heads[0].Wv"),
            std::string::npos);
  EXPECT_NE(error_of(doc(R"({"Wq":[[1,0],[0,1]],"Wk":[[1,0],[0,1]],"Wv":[[1,0],[0,1]],"bq":[1]})"))
                .find("layers[0].heads[0].bq"),
            std::string::npos);
  EXPECT_NE(error_of(doc(good_head, R"(,"beta":"sqrt")")).find("beta"), std::string::npos);
  EXPECT_NE(error_of(doc(good_head, R"(,"beta":-1)")).find("beta"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version":2,"d":2,"layers":[]})").find("schema_version"), std::string::npos);
  EXPECT_NE(error_of("{not json").find("not valid JSON"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version":1,"d":2,"layers":[{"residual":1,"heads":[]}]})").find("layers[0].residual"),
            std::string::npos);
}

TEST(Manifest, CommentLines) {
  const RunManifest m = manifest();
  const std::string s = m.comment_lines();
  EXPECT_EQ(s.rfind("# command_line: attnlab test\n# seed: 9\n# rng: mt19937_64+splitmix64\n# version: ", 0), 0u);
  EXPECT_NE(s.find("# timestamp: "), std::string::npos);
}

TEST(Csv, ZeroRowsIsManifestPlusHeader) {
  const RunManifest m = manifest();
  const std::string s = sweep_csv(SweepResult{}, m);
  EXPECT_EQ(s, m.comment_lines() + std::string(kSweepCsvHeader) + "\n");
  EXPECT_TRUE(parse_sweep_csv(s).empty());
}

TEST(Csv, ParseBackIsExact) {
  SweepGrid g;
  g.etas = {0.003, 0.03};
  g.layers = {2, 3};
  g.heads = {1, 2};
  g.n = 5;
  g.d = 4;
  g.trials = 5;
  const SweepResult r = eta_sweep(g);
  const std::string s = sweep_csv(r, manifest());
  EXPECT_EQ(s.find('\r'), std::string::npos);
  const auto rows = parse_sweep_csv(s);
  ASSERT_EQ(rows.size(), r.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow &a = rows[i], &b = r.rows[i];
    EXPECT_EQ(a.eta, b.eta);
    EXPECT_EQ(a.L, b.L);
    EXPECT_EQ(a.H, b.H);
    EXPECT_EQ(a.n, b.n);
    EXPECT_EQ(a.d, b.d);
    EXPECT_EQ(a.phi0, b.phi0);
    EXPECT_EQ(a.trial, b.trial);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.err_inf, b.err_inf);
    EXPECT_EQ(a.x_inf, b.x_inf);
    EXPECT_EQ(a.rel_err, b.rel_err);
    EXPECT_EQ(a.delta, b.delta);
    EXPECT_EQ(a.C, b.C);
    EXPECT_EQ(a.paper_bound, b.paper_bound);
    EXPECT_EQ(a.bound_ok, b.bound_ok);
  }
  EXPECT_NE(s.find("# slope L=3 H=2"), std::string::npos);
  EXPECT_THROW(parse_sweep_csv("a,b\n"), Error);
  EXPECT_THROW(parse_sweep_csv(std::string(kSweepCsvHeader) + "\n1,2\n"), Error);
}

TEST(Csv, RankCollapseLayout) {
  RankCollapseConfig c;
  c.trials = 3;
  c.layers = 2;
  const std::string s = rank_collapse_csv(rank_collapse_experiment(c), manifest());
  EXPECT_NE(s.find(std::string(kRankCollapseCsvHeader) + "\n0,0,"), std::string::npos);
  EXPECT_NE(s.find("\n2,2,"), std::string::npos);
  EXPECT_NE(s.find("# fraction_strictly_decreasing 1\n"), std::string::npos);
}

TEST(Report, DeterministicModuloTimestamp) {
  TrialConfig c;
  c.trials = 1;
  const SuiteResult a = run_suite(c, lemma_selection("all"));
  const SuiteResult b = run_suite(c, lemma_selection("all"));
  RunManifest m1 = manifest(), m2 = manifest();
  m2.timestamp = "1970-01-01T00:00:00Z";
  const std::string s1 = suite_to_string(a, c, m1), s2 = suite_to_string(b, c, m2);
  EXPECT_NE(s1, s2);
  EXPECT_EQ(drop_timestamp(s1), drop_timestamp(s2));
  const Json j = Json::parse(s1);
  EXPECT_EQ(j["reports"].size(), 29u);
  EXPECT_EQ(j["reports"][2]["id"], "FACT_3_3_P2");
  EXPECT_EQ(j["reports"][2]["counterexample"]["measured"], 2.0);
  EXPECT_EQ(j["manifest"]["rng"], "mt19937_64+splitmix64");
}
