#include <gtest/gtest.h>

#include "attnlab/verifier.hpp"

using namespace attnlab;

namespace {

TrialConfig small_cfg(std::size_t trials = 300) {
  TrialConfig c;
  c.trials = trials;
  c.seed = 3;
  c.workers = 1;
  return c;
}

bool same_report(const LemmaReport& a, const LemmaReport& b) {
  return a.violations == b.violations && a.max_ratio == b.max_ratio && a.worst_seed == b.worst_seed &&
         a.worst_measured == b.worst_measured && a.worst_bound == b.worst_bound && a.resamples == b.resamples;
}

}  // namespace

TEST(LemmaIds, TableIsConsistent) {
  ASSERT_EQ(kLemmas.size(), 29u);
  for (std::size_t i = 0; i < kLemmas.size(); ++i) {
    EXPECT_EQ(static_cast<std::size_t>(kLemmas[i].id), i);
    EXPECT_EQ(parse_lemma_id(kLemmas[i].name), kLemmas[i].id);
  }
  EXPECT_FALSE(parse_lemma_id("NOPE").has_value());
  EXPECT_THROW(lemma_selection("NOPE"), Error);
  EXPECT_EQ(lemma_selection("all").size(), 29u);
  EXPECT_EQ(lemma_selection("robust").size(), 16u);
  EXPECT_EQ(lemma_selection("audit").size(), 13u);
  EXPECT_EQ(lemma_selection("LD_2"), std::vector<LemmaId>{LemmaId::LD_2});
  for (LemmaId id : lemma_selection("robust")) EXPECT_EQ(lemma_info(id).cls, CheckClass::Robust);
}

TEST(ViolationRule, RelativeAndAbsoluteSlack) {
  EXPECT_FALSE(violates(1.0, 1.0, 0.0));
  EXPECT_TRUE(violates(1.0 + 1e-12, 1.0, 0.0));
  EXPECT_FALSE(violates(1.0 + 1e-12, 1.0, 1e-9));
  EXPECT_TRUE(violates(1.0 + 1e-8, 1.0, 1e-9));
  EXPECT_FALSE(violates(5e-10, 0.0, 1e-9));
  EXPECT_EQ(severity(1.0, 0.0), std::numeric_limits<double>::infinity());
  EXPECT_EQ(severity(0.0, 0.0), 0.0);
}

TEST(Config, Validation) {
  TrialConfig c;
  c.trials = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrialConfig{};
  c.slack = -1;
  EXPECT_THROW(c.validate(), Error);
  c = TrialConfig{};
  c.n_max = 1;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(run_suite(TrialConfig{}, {}), Error);
}

TEST(Checkers, ShiftInvarianceHolds) {
  TrialConfig c = small_cfg(10000);
  c.workers = 0;
  const LemmaReport r = check_lemma(LemmaId::FACT_3_2, c);
  EXPECT_EQ(r.trials_run, 10000u);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Checkers, ZeroPerturbationIsExact) {
  TrialConfig c = small_cfg();
  c.eps = 0.0;
  const LemmaReport r = check_lemma(LemmaId::L4_4, c);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.worst_measured, 0.0);
  EXPECT_EQ(r.worst_bound, 0.0);
}

TEST(Checkers, ScalarInequalitiesHold) {
  const TrialConfig c = small_cfg(2000);
  for (LemmaId id : {LemmaId::FACT_3_3_P1, LemmaId::L4_2_P1, LemmaId::L4_2_P2, LemmaId::L4_2_P3, LemmaId::L4_2_P4,
                     LemmaId::L4_3_P1, LemmaId::L4_3_P2, LemmaId::L4_4, LemmaId::LB_1, LemmaId::COR_D_1, LemmaId::LD_2}) {
    const LemmaReport r = check_lemma(id, c);
    EXPECT_EQ(r.violations, 0u) << lemma_name(id);
    EXPECT_LE(r.max_ratio, 1.0) << lemma_name(id);
    EXPECT_GT(r.max_ratio, 0.0) << lemma_name(id);
  }
}

TEST(Checkers, AuditReportsCarryDimensionSweep) {
  const TrialConfig c = small_cfg(50);
  for (LemmaId id : lemma_selection("audit")) {
    const LemmaReport r = check_lemma(id, c);
    ASSERT_EQ(r.dimension_sweep.size(), 3u) << lemma_name(id);
    EXPECT_EQ(r.dimension_sweep[0].d, 2u);
    EXPECT_EQ(r.dimension_sweep[2].d, 8u);
    EXPECT_GE(r.max_ratio, 0.0);
  }
  EXPECT_TRUE(check_lemma(LemmaId::L4_4, c).dimension_sweep.empty());
}

TEST(Checkers, FullSuiteIsDeterministicAcrossWorkerCounts) {
  TrialConfig a = small_cfg(200), b = a;
  b.workers = 4;
  const SuiteResult ra = run_suite(a, lemma_selection("all"));
  const SuiteResult rb = run_suite(b, lemma_selection("all"));
  ASSERT_EQ(ra.reports.size(), rb.reports.size());
  for (std::size_t i = 0; i < ra.reports.size(); ++i) {
    EXPECT_EQ(ra.reports[i].id, kLemmas[i].id);
    EXPECT_TRUE(same_report(ra.reports[i], rb.reports[i])) << lemma_name(ra.reports[i].id);
  }
}

TEST(Checkers, WorstSeedReplaysBitExactly) {
  const TrialConfig c = small_cfg(500);
  for (LemmaId id : {LemmaId::L4_4, LemmaId::LB_2, LemmaId::L5_1, LemmaId::LD_4, LemmaId::THM_5_3}) {
    const LemmaReport r = check_lemma(id, c);
    const TrialOutcome o = replay_trial(id, c, r.worst_seed);
    EXPECT_EQ(o.measured, r.worst_measured) << lemma_name(id);
    EXPECT_EQ(o.bound, r.worst_bound) << lemma_name(id);
  }
}

TEST(Checkers, MultiHeadSkipRecordsBothReadings) {
  const LemmaReport r = check_lemma(LemmaId::LC_1_P1, small_cfg());
  ASSERT_TRUE(r.alternate.has_value());
  EXPECT_EQ(r.alternate->label, "2g(2H eps)");
  EXPECT_GE(r.alternate->max_ratio, r.max_ratio);
  const TrialOutcome o = replay_trial(LemmaId::LC_1_P1, small_cfg(), 0);
  ASSERT_TRUE(o.alt_bound.has_value());
  EXPECT_LT(*o.alt_bound, o.bound);
}

TEST(Checkers, EtaSlopeForCollapse) {
  const LemmaReport r = check_lemma(LemmaId::THM_5_3, small_cfg(100));
  ASSERT_TRUE(r.eta_slope.has_value());
  EXPECT_GT(*r.eta_slope, 0.5);
  EXPECT_LT(*r.eta_slope, 1.5);
}

TEST(Counterexamples, AllOnesWitnessForInfNorm) {
  const auto ce = find_counterexample(LemmaId::FACT_3_3_P2, small_cfg());
  ASSERT_TRUE(ce.has_value());
  EXPECT_EQ(ce->source, "hand witness");
  EXPECT_EQ(ce->measured, 2.0);
  EXPECT_EQ(ce->bound, 1.0);
  ASSERT_EQ(ce->instance.matrices.size(), 2u);
  EXPECT_EQ(ce->instance.matrices[0].second, Mat::ones(2, 2));
  const LemmaReport r = check_lemma(LemmaId::FACT_3_3_P2, small_cfg());
  EXPECT_GT(r.violations, 0u);
  ASSERT_TRUE(r.counterexample.has_value());
  EXPECT_FALSE(r.failed());
}

TEST(Counterexamples, NoneForL1Submultiplicativity) {
  TrialConfig c = small_cfg(10000);
  c.workers = 0;
  EXPECT_FALSE(find_counterexample(LemmaId::FACT_3_3_P1, c).has_value());
}

// The Res perturbation bound only reaches 2 eps: an interior entry can move
// against both column extremes.
TEST(Counterexamples, ResPerturbationWitness) {
  const auto ce = find_counterexample(LemmaId::L4_1, small_cfg());
  ASSERT_TRUE(ce.has_value());
  EXPECT_EQ(ce->measured, 0.5);
  EXPECT_EQ(ce->bound, 0.25);
  const LemmaReport r = check_lemma(LemmaId::L4_1, small_cfg(2000));
  EXPECT_LE(r.max_ratio, 2.0 + 1e-12);
  EXPECT_TRUE(r.failed());
}

TEST(Counterexamples, RandomWitnessIsReplayable) {
  const TrialConfig c = small_cfg(500);
  const auto ce = find_counterexample(LemmaId::LB_2, c);
  ASSERT_TRUE(ce.has_value());
  EXPECT_EQ(ce->source, "trial");
  EXPECT_EQ(ce->instance.d, 2u);
  const TrialOutcome o = replay_trial(LemmaId::LB_2, c, ce->stream_index);
  EXPECT_EQ(o.measured, ce->measured);
}

TEST(Suite, RobustFlagTracksRobustViolationsOnly) {
  const TrialConfig c = small_cfg(200);
  EXPECT_TRUE(run_suite(c, {LemmaId::FACT_3_2, LemmaId::FACT_3_3_P2, LemmaId::FACT_3_3_P3}).robust_ok);
  EXPECT_FALSE(run_suite(c, {LemmaId::FACT_3_2, LemmaId::L4_1}).robust_ok);
}

TEST(Sampling, RejectionCapNamesHypothesis) {
  std::size_t resamples = 0;
  try {
    detail::rejection_sample("X", "never true", resamples, [] { return std::optional<int>{}; });
    FAIL() << "expected throw";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("never true"), std::string::npos);
  }
  EXPECT_EQ(resamples, 1000u);
}

TEST(Sampling, ParallelForRethrows) {
  EXPECT_THROW(detail::parallel_for(100, 4,
                                    [](std::size_t i) {
                                      if (i == 57) throw Error("boom");
                                    }),
               Error);
}
