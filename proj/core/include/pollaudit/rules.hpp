#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "pollaudit/log_value.hpp"
#include "pollaudit/prior.hpp"

namespace pollaudit {

enum class Decision { kContinue, kStopWinnerConfirmed, kStopHandCount };

std::string_view to_string(Decision d);           // continue | confirmed_winner | hand_count
Decision decision_from_string(std::string_view s);  // inverse; throws PreconditionError

// Sequential probability ratio test with independent draws.
struct WaldWithReplacement {
  double p0, p1, alpha, beta;
};
// Same hypotheses evaluated with hypergeometric likelihoods over N ballots.
struct WaldWithoutReplacement {
  double p0, p1, alpha, beta;
  std::int64_t ballots;
};
// Wald test against a tie (p0 = 1/2); beta = 0 gives BRAVO.
struct TraditionalRlaWithReplacement {
  double p, alpha, beta;
};
struct TraditionalRlaWithoutReplacement {
  double p, alpha, beta;
  std::int64_t ballots;
};
// Posterior-odds test; the prior is rebalanced to equal winning/losing halves.
struct BayesianAudit {
  double gamma;
  Prior prior;
};
// Posterior-odds test against rla_transform(prior); risk-limiting at alpha.
struct BayesianRlaAudit {
  double alpha;
  Prior prior;
};

using RuleParams = std::variant<WaldWithReplacement, WaldWithoutReplacement,
                                TraditionalRlaWithReplacement, TraditionalRlaWithoutReplacement,
                                BayesianAudit, BayesianRlaAudit>;

// An audit family with validated parameters. Copies share the compiled
// evaluation state; instances are immutable and thread-safe.
class AuditRule {
 public:
  // Throws PreconditionError on out-of-range parameters.
  explicit AuditRule(RuleParams params);

  static AuditRule wald(double p0, double p1, double alpha, double beta);
  static AuditRule wald_without_replacement(double p0, double p1, double alpha, double beta,
                                            std::int64_t ballots);
  static AuditRule traditional_rla(double p, double alpha, double beta);
  static AuditRule traditional_rla_without_replacement(double p, double alpha, double beta,
                                                       std::int64_t ballots);
  static AuditRule bravo(double p, double alpha) { return traditional_rla(p, alpha, 0.0); }
  static AuditRule bayesian(double gamma, Prior prior);
  static AuditRule bayesian_rla(double alpha, Prior prior);

  const RuleParams& params() const;
  std::string_view kind_name() const;
  bool without_replacement() const;
  // Ballot count for without-replacement families.
  std::optional<std::int64_t> ballots() const;

  // Confirm when the statistic exceeds upper_bound(); hand count when it is
  // below lower_bound().
  LogValue upper_bound() const;
  LogValue lower_bound() const;

  // The prior actually summed by Bayesian families (balanced or transformed).
  const Prior* effective_prior() const;

  struct Compiled;
  const Compiled& compiled() const { return *compiled_; }

 private:
  std::shared_ptr<const Compiled> compiled_;
};

struct ThresholdPair {
  std::int64_t n = 0;
  std::optional<std::int64_t> k_plus;
  std::optional<std::int64_t> k_minus;

  friend bool operator==(const ThresholdPair&, const ThresholdPair&) = default;
};

// Log-statistics closer than this to a bound count as equal (Continue).
inline constexpr double kBoundaryTolerance = 1e-9;

// ln of the rule's decision statistic for k winner ballots among n drawn.
// Throws ImpossibleSample when numerator and denominator are both zero and
// PreconditionError for k outside [0, n] or n beyond the population.
LogValue log_statistic(const AuditRule& rule, std::int64_t n, std::int64_t k);

// Strict comparison of a statistic against the rule's bounds.
Decision classify(const AuditRule& rule, LogValue statistic);

Decision decide(const AuditRule& rule, std::int64_t n, std::int64_t k);

// Smallest k in [0, n] that confirms and largest that escalates, found by
// binary search over the (monotone) statistic. Impossible samples are
// resolved by their one-sided limit.
ThresholdPair thresholds(const AuditRule& rule, std::int64_t n);

// Closed-form thresholds for the with-replacement traditional RLA, nudged
// by one where the ceiling/floor lands on an equality.
ThresholdPair thresholds_closed_form(double p, double alpha, double beta, std::int64_t n);

// Conversion of assumed vote shares to integral tallies: nearest integer,
// with halves broken toward the tie and clamped to the correct side.
std::int64_t losing_tally_for_share(double p0, std::int64_t ballots);
std::int64_t winning_tally_for_share(double p1, std::int64_t ballots);

nlohmann::json rule_to_json(const AuditRule& rule);
AuditRule rule_from_json(const nlohmann::json& j);

}  // namespace pollaudit
