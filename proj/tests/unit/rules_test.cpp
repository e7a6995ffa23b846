#include <gtest/gtest.h>

#include <cmath>

#include "pollaudit/error.hpp"
#include "pollaudit/rules.hpp"

namespace pollaudit {
namespace {

TEST(Decision, StringsRoundTrip) {
  for (auto d : {Decision::kContinue, Decision::kStopWinnerConfirmed, Decision::kStopHandCount}) {
    EXPECT_EQ(decision_from_string(to_string(d)), d);
  }
  EXPECT_EQ(to_string(Decision::kStopWinnerConfirmed), "confirmed_winner");
  EXPECT_THROW(decision_from_string("maybe"), PreconditionError);
}

TEST(AuditRule, ValidatesParameters) {
  EXPECT_THROW(AuditRule::wald(0.5, 0.75, 0.0, 0.1), PreconditionError);
  EXPECT_THROW(AuditRule::wald(0.5, 0.75, 0.5, 0.1), PreconditionError);
  EXPECT_THROW(AuditRule::wald(0.6, 0.75, 0.1, 0.1), PreconditionError);
  EXPECT_THROW(AuditRule::wald(0.5, 0.5, 0.1, 0.1), PreconditionError);
  EXPECT_THROW(AuditRule::traditional_rla(1.01, 0.1, 0.1), PreconditionError);
  EXPECT_THROW(AuditRule::traditional_rla(0.75, 0.1, 0.5), PreconditionError);
  EXPECT_THROW(AuditRule::bayesian(0.6, uniform_tallies(10)), PreconditionError);
  EXPECT_THROW(AuditRule::bayesian_rla(0.0, uniform_winning(10)), PreconditionError);
  EXPECT_THROW(AuditRule::bayesian(0.1, uniform_winning(10)), PreconditionError);  // no losing mass
  EXPECT_NO_THROW(AuditRule::bravo(0.75, 0.1));
  EXPECT_NO_THROW(AuditRule::traditional_rla(1.0, 0.1, 0.1));
}

TEST(AuditRule, BoundsBracketOne) {
  const AuditRule w = AuditRule::wald(0.5, 0.75, 0.05, 0.1);
  EXPECT_NEAR(w.upper_bound().log(), std::log(0.9 / 0.05), 1e-12);
  EXPECT_NEAR(w.lower_bound().log(), std::log(0.1 / 0.95), 1e-12);
  const AuditRule b = AuditRule::bayesian(0.1, uniform_tallies(20));
  EXPECT_NEAR(b.upper_bound().log(), std::log(9.0), 1e-12);
  EXPECT_NEAR(b.lower_bound().log(), -std::log(9.0), 1e-12);
  EXPECT_TRUE(AuditRule::bravo(0.75, 0.1).lower_bound().is_zero());
}

TEST(LogStatistic, Examples) {
  const AuditRule w = AuditRule::wald(0.5, 0.75, 0.1, 0.1);
  EXPECT_NEAR(log_statistic(w, 2, 2).log(), std::log(2.25), 1e-12);

  const AuditRule b = AuditRule::bayesian(0.25, uniform_tallies(5));
  EXPECT_NEAR(log_statistic(b, 1, 1).log(), std::log(4.0), 1e-12);

  const AuditRule r = AuditRule::traditional_rla_without_replacement(0.75, 0.1, 0.1, 100);
  EXPECT_TRUE(log_statistic(r, 60, 60).is_infinite());
  // 50 loser ballots cannot come from the 25 losers of the p = 0.75 hypothesis.
  EXPECT_TRUE(log_statistic(r, 60, 10).is_zero());
  // 60 loser ballots exceed the losers under either hypothesis.
  EXPECT_THROW(log_statistic(r, 60, 0), ImpossibleSample);
}

TEST(LogStatistic, ImpossibleSampleThrows) {
  const AuditRule b = AuditRule::bayesian(0.1, two_point(10, 2, 6));
  // k = 7 exceeds every tally in the support.
  EXPECT_THROW(log_statistic(b, 8, 7), ImpossibleSample);
  EXPECT_THROW(decide(b, 8, 7), ImpossibleSample);
}

TEST(LogStatistic, RejectsBadSamples) {
  const AuditRule r = AuditRule::traditional_rla_without_replacement(0.75, 0.1, 0.1, 100);
  EXPECT_THROW(log_statistic(r, 101, 50), PreconditionError);
  EXPECT_THROW(log_statistic(r, 10, 11), PreconditionError);
  EXPECT_THROW(log_statistic(r, 10, -1), PreconditionError);
}

TEST(Decide, Examples) {
  EXPECT_EQ(decide(AuditRule::bayesian(0.25, uniform_tallies(5)), 1, 1), Decision::kStopWinnerConfirmed);
  EXPECT_EQ(decide(AuditRule::bayesian(0.1, two_point(100, 50, 75)), 0, 0), Decision::kContinue);
}

TEST(Decide, EqualityContinues) {
  // ln 4 statistic against U = 4 exactly (gamma = 1/5) must not stop.
  const AuditRule b = AuditRule::bayesian(0.2, uniform_tallies(5));
  EXPECT_EQ(classify(b, LogValue::from_linear(4.0)), Decision::kContinue);
  EXPECT_EQ(decide(b, 1, 1), Decision::kContinue);
  EXPECT_EQ(classify(b, LogValue::from_linear(0.25)), Decision::kContinue);
  EXPECT_EQ(classify(b, LogValue::from_linear(4.001)), Decision::kStopWinnerConfirmed);
  EXPECT_EQ(classify(b, LogValue::from_linear(0.2499)), Decision::kStopHandCount);
  EXPECT_EQ(classify(b, LogValue::infinity()), Decision::kStopWinnerConfirmed);
  EXPECT_EQ(classify(b, LogValue::zero()), Decision::kStopHandCount);
}

TEST(Thresholds, ReferenceExamples) {
  const AuditRule bayes = AuditRule::bayesian(0.1, beta_shape(100000, 0.5, 0.5));
  EXPECT_EQ(thresholds(bayes, 200).k_plus, 110);
  const AuditRule rla = AuditRule::bayesian_rla(0.1, uniform_winning(100000));
  EXPECT_EQ(thresholds(rla, 200).k_plus, 120);
}

TEST(Thresholds, BravoNeverEscalates) {
  const AuditRule b = AuditRule::bravo(0.7, 0.05);
  for (std::int64_t n = 1; n <= 300; n += 7) EXPECT_FALSE(thresholds(b, n).k_minus.has_value()) << n;
}

// Thresholds must classify every possible count exactly as decide() does.
// Counts impossible under every hypothesis carry no verdict, so a threshold
// may sit anywhere inside a run of them.
TEST(Thresholds, MatchLinearScan) {
  for (const AuditRule& rule :
       {AuditRule::bayesian(0.05, uniform_tallies(61)), AuditRule::bayesian_rla(0.05, uniform_winning(61)),
        AuditRule::wald_without_replacement(0.4, 0.7, 0.05, 0.1, 61),
        AuditRule::traditional_rla_without_replacement(0.7, 0.05, 0.05, 61), AuditRule::wald(0.45, 0.6, 0.1, 0.2)}) {
    for (std::int64_t n = 0; n <= 61; ++n) {
      const ThresholdPair t = thresholds(rule, n);
      ASSERT_EQ(t.n, n);
      for (std::int64_t k = 0; k <= n; ++k) {
        Decision d;
        try {
          d = decide(rule, n, k);
        } catch (const ImpossibleSample&) {
          continue;
        }
        const bool confirm = t.k_plus && k >= *t.k_plus;
        const bool escalate = t.k_minus && k <= *t.k_minus;
        ASSERT_EQ(d == Decision::kStopWinnerConfirmed, confirm) << rule.kind_name() << " n=" << n << " k=" << k;
        ASSERT_EQ(d == Decision::kStopHandCount, escalate) << rule.kind_name() << " n=" << n << " k=" << k;
      }
    }
  }
}

TEST(Thresholds, ImpossibleEdgesUseOneSidedLimits) {
  // Support {2, 6}: k = 7 or 8 is impossible under both atoms.
  const AuditRule b = AuditRule::bayesian(0.1, two_point(10, 2, 6));
  const ThresholdPair t = thresholds(b, 8);
  ASSERT_TRUE(t.k_plus.has_value());
  EXPECT_LE(*t.k_plus, 6);
  ASSERT_TRUE(t.k_minus.has_value());
  EXPECT_LT(*t.k_minus, *t.k_plus);
}

TEST(ClosedForm, Example) {
  const ThresholdPair t = thresholds_closed_form(0.75, 0.1, 0.1, 100);
  EXPECT_EQ(t.k_plus, 66);
  EXPECT_EQ(t, thresholds(AuditRule::traditional_rla(0.75, 0.1, 0.1), 100));
  EXPECT_FALSE(thresholds_closed_form(0.75, 0.1, 0.0, 50).k_minus.has_value());
  EXPECT_THROW(thresholds_closed_form(1.0, 0.1, 0.1, 10), PreconditionError);
}

TEST(ShareRounding, HalvesBreakTowardTheTie) {
  EXPECT_EQ(losing_tally_for_share(0.45, 100), 45);
  EXPECT_EQ(losing_tally_for_share(0.455, 100), 46);  // 45.5 rounds up toward 50
  EXPECT_EQ(losing_tally_for_share(0.5, 101), 50);    // clamped to floor(N/2)
  EXPECT_EQ(winning_tally_for_share(0.755, 100), 75);  // 75.5 rounds down toward 51
  EXPECT_EQ(winning_tally_for_share(0.51, 101), 52);  // 51.51 rounds to 52
  EXPECT_EQ(winning_tally_for_share(0.501, 100), 51);  // clamped to floor(N/2)+1
  EXPECT_EQ(winning_tally_for_share(1.0, 100), 100);
}

TEST(BayesianRla, MatchesBayesianOnTransformedPrior) {
  const Prior f = beta_shape(81, 2, 1);
  const AuditRule rla = AuditRule::bayesian_rla(0.05, f);
  const AuditRule bayes = AuditRule::bayesian(0.05, rla_transform(f));
  for (std::int64_t n = 0; n <= 81; ++n) {
    for (std::int64_t k = 0; k <= n; ++k) {
      int a = -1, b = -1;
      try { a = static_cast<int>(decide(rla, n, k)); } catch (const ImpossibleSample&) {}
      try { b = static_cast<int>(decide(bayes, n, k)); } catch (const ImpossibleSample&) {}
      ASSERT_EQ(a, b) << n << " " << k;
    }
  }
}

TEST(RuleJson, RoundTripsEveryKind) {
  for (const AuditRule& rule :
       {AuditRule::wald(0.45, 0.6, 0.1, 0.2), AuditRule::wald_without_replacement(0.4, 0.7, 0.05, 0.1, 61),
        AuditRule::traditional_rla(0.7, 0.05, 0.0), AuditRule::traditional_rla_without_replacement(0.7, 0.05, 0.05, 61),
        AuditRule::bayesian(0.1, beta_shape(300, 0.5, 0.5)), AuditRule::bayesian_rla(0.05, uniform_winning(300))}) {
    const nlohmann::json j = rule_to_json(rule);
    const AuditRule back = rule_from_json(j);
    EXPECT_EQ(rule_to_json(back), j);
    EXPECT_EQ(back.kind_name(), rule.kind_name());
    for (std::int64_t n : {10, 50}) EXPECT_EQ(thresholds(back, n), thresholds(rule, n)) << j.dump();
  }
  EXPECT_THROW(rule_from_json(nlohmann::json::parse(R"({"kind": "nope"})")), PreconditionError);
}

}  // namespace
}  // namespace pollaudit
