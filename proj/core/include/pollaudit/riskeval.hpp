#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pollaudit/prior.hpp"
#include "pollaudit/tables.hpp"

namespace pollaudit {

// Where the multi-round audit defined by a table ends for a fixed true tally.
// Paths still undecided after the last round are `unresolved`, which the
// audit treats as a hand count.
struct StopProbabilities {
  double confirm = 0.0;
  double hand_count = 0.0;
  double unresolved = 0.0;

  double escalate() const { return hand_count + unresolved; }
};

// How a simulated or enumerated path treats a count at or below k_minus.
enum class PathRule {
  kAbsorbHandCount,  // the audit stops and escalates
  kConfirmOnly,      // k_minus is ignored; only k_plus or the end of the schedule stops
};
std::string to_string(PathRule r);  // absorbing | confirm_only
PathRule path_rule_from_string(std::string_view s);

struct DpOptions {
  PathRule path_rule = PathRule::kAbsorbHandCount;
  // Drop hypergeometric terms below this fraction of the row's peak. 0 keeps
  // everything that does not underflow.
  double relative_cutoff = 0.0;
};

// Exact forward DP over cumulative winner counts at each round boundary,
// sampling without replacement. Throws PreconditionError for
// with-replacement tables, x outside [0, N], or N inconsistent with the table.
StopProbabilities stop_probabilities_dp(const LookupTable& table, std::int64_t ballots,
                                        std::int64_t x, DpOptions options = {});
// P_T: probability of confirming the announced winner when the true tally is x.
double exact_risk_dp(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                     PathRule path_rule = PathRule::kAbsorbHandCount);

// The same DP for with-replacement tables (binomial increments, share x/N).
StopProbabilities stop_probabilities_binomial(const LookupTable& table, std::int64_t ballots,
                                              std::int64_t x,
                                              PathRule path_rule = PathRule::kAbsorbHandCount);
double exact_risk_dp_binomial(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                              PathRule path_rule = PathRule::kAbsorbHandCount);

// Exhaustive enumeration of all placements of x winner ballots in the draw
// order; an oracle for the DP that never evaluates a hypergeometric pmf.
// Requires N <= 15.
inline constexpr std::int64_t kMaxEnumerationBallots = 15;
StopProbabilities stop_probabilities_enum(const LookupTable& table, std::int64_t ballots,
                                          std::int64_t x,
                                          PathRule path_rule = PathRule::kAbsorbHandCount);
double exact_risk_enum(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                       PathRule path_rule = PathRule::kAbsorbHandCount);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;  // binomial standard error of `value`
  std::int64_t successes = 0;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo estimate of P_T(x). Trial i draws from its own generator seeded
// by (seed, i), so the result is identical for every `jobs`.
Estimate simulate_risk(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                       std::int64_t trials, std::uint64_t seed, unsigned jobs = 1,
                       PathRule path_rule = PathRule::kAbsorbHandCount);

enum class RiskMethod { kExactDp, kEnumeration, kMonteCarlo };
std::string to_string(RiskMethod m);

struct PriorErrors {
  // Prior-weighted probability of confirming given the announced winner lost.
  double miss = 0.0;
  // Prior-weighted probability of escalating given the announced winner won;
  // unresolved paths count as escalation.
  double unnecessary_hand_count = 0.0;
  // Part of the above where the test itself crossed below k_minus.
  double decisive_hand_count = 0.0;
  // Part where the schedule ran out.
  double unresolved_given_winner = 0.0;
  RiskMethod method = RiskMethod::kExactDp;
};

struct ErrorOptions {
  std::int64_t exact_cap = 2000;  // exact DP when N <= exact_cap
  std::int64_t trials = 10000;    // Monte Carlo fallback, per hypothesis
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

PriorErrors prior_weighted_errors(const LookupTable& table, const Prior& prior,
                                  const ErrorOptions& options = {});

struct MaxRiskOptions {
  RiskMethod method = RiskMethod::kExactDp;
  PathRule path_rule = PathRule::kAbsorbHandCount;
  std::int64_t exact_cap = 2000;
  std::int64_t trials = 10000;
  std::uint64_t seed = 0;
  // Monte Carlo only: losing tallies evaluated besides floor(N/2).
  std::vector<std::int64_t> extra_tallies;
  unsigned jobs = 1;
};

struct TallyRisk {
  std::int64_t x = 0;
  double risk = 0.0;
  std::optional<double> std_error;
};

struct RiskReport {
  RiskMethod method = RiskMethod::kExactDp;
  PathRule path_rule = PathRule::kAbsorbHandCount;
  std::int64_t ballots = 0;
  std::vector<TallyRisk> tallies;  // losing tallies only, ascending x
  double max_risk = 0.0;
  std::int64_t argmax = 0;  // largest x attaining max_risk
  std::optional<std::int64_t> trials;
  std::optional<std::uint64_t> seed;
};

RiskReport max_risk(const LookupTable& table, std::int64_t ballots, const MaxRiskOptions& options);

nlohmann::json risk_report_to_json(const RiskReport& report);
// "x,risk[,std_error]" rows.
std::string risk_curve_csv(const RiskReport& report);

}  // namespace pollaudit
