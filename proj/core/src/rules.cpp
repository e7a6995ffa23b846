#include "pollaudit/rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pollaudit/error.hpp"
#include "pollaudit/hypergeom.hpp"

namespace pollaudit {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

struct AuditRule::Compiled {
  enum class Mode { kBinomial, kTwoAtom, kPriorSum };

  RuleParams params;
  std::string_view kind;
  Mode mode = Mode::kBinomial;
  double log_upper = 0.0;
  double log_lower = 0.0;

  // kBinomial: vote shares under each hypothesis.
  double share_win = 0.0;
  double share_lose = 0.0;

  // kTwoAtom and kPriorSum.
  std::int64_t ballots = 0;
  std::int64_t tally_win = 0;
  std::int64_t tally_lose = 0;

  // kPriorSum: atoms with positive mass, sorted by tally.
  std::optional<Prior> effective;
  std::vector<std::int64_t> win_x, lose_x;
  std::vector<double> win_log_mass, lose_log_mass;
};

namespace {

using Mode = AuditRule::Compiled::Mode;

void check_risk(double v, const char* name, bool allow_zero) {
  const bool ok = (allow_zero ? v >= 0.0 : v > 0.0) && v < 0.5;
  detail::require(ok, std::string(name) + (allow_zero ? " must lie in [0, 1/2)" : " must lie in (0, 1/2)"));
}

void set_wald_bounds(AuditRule::Compiled& c, double alpha, double beta) {
  c.log_upper = std::log1p(-beta) - std::log(alpha);
  c.log_lower = beta > 0.0 ? std::log(beta) - std::log1p(-alpha) : -kInf;
}

void set_bayes_bounds(AuditRule::Compiled& c, double gamma) {
  c.log_upper = std::log1p(-gamma) - std::log(gamma);
  c.log_lower = -c.log_upper;
}

void load_prior(AuditRule::Compiled& c, Prior prior) {
  c.mode = Mode::kPriorSum;
  c.ballots = prior.ballots();
  reserve_log_factorials(c.ballots);
  for (std::int64_t x = 0; x <= c.ballots; ++x) {
    const double lm = prior.log_mass(x);
    if (lm == -kInf) continue;
    if (is_winning_tally(c.ballots, x)) {
      c.win_x.push_back(x);
      c.win_log_mass.push_back(lm);
    } else {
      c.lose_x.push_back(x);
      c.lose_log_mass.push_back(lm);
    }
  }
  c.effective = std::move(prior);
}

// x * ln(p) with 0 * ln(0) = 0.
double xlogp(std::int64_t count, double p) {
  if (count == 0) return 0.0;
  return p > 0.0 ? static_cast<double>(count) * std::log(p) : -kInf;
}

// ln sum_x hg(k; N, x, n) f(x), up to terms shared by every x.
LogValue prior_side(const std::vector<std::int64_t>& xs, const std::vector<double>& log_mass,
                    std::int64_t ballots, std::int64_t n, std::int64_t k) {
  // hg(k; N, x, n) > 0 iff k <= x <= N - n + k.
  const auto first = std::lower_bound(xs.begin(), xs.end(), k);
  const auto last = std::upper_bound(first, xs.end(), ballots - n + k);
  long double hi = -std::numeric_limits<long double>::infinity();
  double acc = 0.0;
  for (auto it = first; it != last; ++it) {
    const std::int64_t x = *it;
    const long double t = log_factorial(x) - log_factorial(x - k) + log_factorial(ballots - x) -
                          log_factorial(ballots - x - (n - k)) +
                          log_mass[static_cast<std::size_t>(it - xs.begin())];
    if (t > hi) {
      acc = acc * std::exp(static_cast<double>(hi - t)) + 1.0;
      hi = t;
    } else {
      acc += std::exp(static_cast<double>(t - hi));
    }
  }
  if (first == last) return LogValue::zero();
  return LogValue::from_log(static_cast<double>(hi + std::log(static_cast<long double>(acc))));
}

struct Parts {
  LogValue numerator;
  LogValue denominator;
};

Parts statistic_parts(const AuditRule::Compiled& c, std::int64_t n, std::int64_t k) {
  switch (c.mode) {
    case Mode::kBinomial:
      return {LogValue::from_log(xlogp(k, c.share_win) + xlogp(n - k, 1.0 - c.share_win)),
              LogValue::from_log(xlogp(k, c.share_lose) + xlogp(n - k, 1.0 - c.share_lose))};
    case Mode::kTwoAtom:
      return {log_hg(k, c.ballots, c.tally_win, n), log_hg(k, c.ballots, c.tally_lose, n)};
    case Mode::kPriorSum:
      return {prior_side(c.win_x, c.win_log_mass, c.ballots, n, k),
              prior_side(c.lose_x, c.lose_log_mass, c.ballots, n, k)};
  }
  return {};
}

void check_sample(const AuditRule::Compiled& c, std::int64_t n, std::int64_t k) {
  detail::require(n >= 0, "sample size must be non-negative");
  detail::require(k >= 0 && k <= n, "winner count must lie in [0, n]");
  if (c.mode != Mode::kBinomial) {
    detail::require(n <= c.ballots, "sample size exceeds the number of ballots");
  }
}

// Direction of the ratio's limit when a sample is impossible under every
// hypothesis: beyond the losing side's reach it tends to +inf, otherwise 0.
LogValue impossible_limit(const AuditRule::Compiled& c, std::int64_t n, std::int64_t k) {
  std::int64_t losing_reach = 0;
  switch (c.mode) {
    case Mode::kBinomial:
      losing_reach = c.share_lose > 0.0 ? n : 0;
      break;
    case Mode::kTwoAtom:
      losing_reach = std::min(n, c.tally_lose);
      break;
    case Mode::kPriorSum:
      losing_reach = c.lose_x.empty() ? -1 : std::min(n, c.lose_x.back());
      break;
  }
  return k > losing_reach ? LogValue::infinity() : LogValue::zero();
}

Decision classify_log(const AuditRule::Compiled& c, double log_stat) {
  if (log_stat > c.log_upper + kBoundaryTolerance) return Decision::kStopWinnerConfirmed;
  if (log_stat < c.log_lower - kBoundaryTolerance) return Decision::kStopHandCount;
  return Decision::kContinue;
}

Decision classify_with_limits(const AuditRule::Compiled& c, std::int64_t n, std::int64_t k) {
  const Parts p = statistic_parts(c, n, k);
  if (p.numerator.is_zero() && p.denominator.is_zero()) {
    return classify_log(c, impossible_limit(c, n, k).log());
  }
  return classify_log(c, (p.numerator / p.denominator).log());
}

}  // namespace

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::kContinue:
      return "continue";
    case Decision::kStopWinnerConfirmed:
      return "confirmed_winner";
    case Decision::kStopHandCount:
      return "hand_count";
  }
  return "continue";
}

Decision decision_from_string(std::string_view s) {
  if (s == "continue") return Decision::kContinue;
  if (s == "confirmed_winner") return Decision::kStopWinnerConfirmed;
  if (s == "hand_count") return Decision::kStopHandCount;
  throw PreconditionError("unknown decision '" + std::string(s) + "'");
}

std::int64_t losing_tally_for_share(double p0, std::int64_t ballots) {
  detail::require(p0 >= 0.0 && p0 <= 0.5, "losing share must lie in [0, 1/2]");
  // Nearest integer; an exact half rounds up, toward the tie.
  const double v = p0 * static_cast<double>(ballots);
  const auto x = static_cast<std::int64_t>(std::floor(v + 0.5 + 1e-9));
  return std::min(x, hardest_losing_tally(ballots));
}

std::int64_t winning_tally_for_share(double p1, std::int64_t ballots) {
  detail::require(p1 > 0.5 && p1 <= 1.0, "winning share must lie in (1/2, 1]");
  // Nearest integer; an exact half rounds down, toward the tie.
  const double v = p1 * static_cast<double>(ballots);
  const auto x = static_cast<std::int64_t>(std::ceil(v - 0.5 - 1e-9));
  return std::clamp(x, smallest_winning_tally(ballots), ballots);
}

AuditRule::AuditRule(RuleParams params) {
  auto c = std::make_shared<Compiled>();
  std::visit(
      [&](auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, WaldWithReplacement>) {
          c->kind = "wald";
          check_risk(r.alpha, "alpha", false);
          check_risk(r.beta, "beta", true);
          detail::require(r.p0 >= 0.0 && r.p0 <= 0.5, "p0 must lie in [0, 1/2]");
          detail::require(r.p1 > 0.5 && r.p1 <= 1.0, "p1 must lie in (1/2, 1]");
          set_wald_bounds(*c, r.alpha, r.beta);
          c->mode = Mode::kBinomial;
          c->share_win = r.p1;
          c->share_lose = r.p0;
        } else if constexpr (std::is_same_v<T, WaldWithoutReplacement>) {
          c->kind = "wald_without_replacement";
          check_risk(r.alpha, "alpha", false);
          check_risk(r.beta, "beta", true);
          detail::require(r.ballots >= 1, "N must be positive");
          set_wald_bounds(*c, r.alpha, r.beta);
          c->mode = Mode::kTwoAtom;
          c->ballots = r.ballots;
          c->tally_lose = losing_tally_for_share(r.p0, r.ballots);
          c->tally_win = winning_tally_for_share(r.p1, r.ballots);
          detail::require(c->tally_win <= r.ballots, "N too small for a winning tally");
        } else if constexpr (std::is_same_v<T, TraditionalRlaWithReplacement>) {
          c->kind = "traditional_rla";
          check_risk(r.alpha, "alpha", false);
          check_risk(r.beta, "beta", true);
          detail::require(r.p > 0.5 && r.p <= 1.0, "p must lie in (1/2, 1]");
          set_wald_bounds(*c, r.alpha, r.beta);
          c->mode = Mode::kBinomial;
          c->share_win = r.p;
          c->share_lose = 0.5;
        } else if constexpr (std::is_same_v<T, TraditionalRlaWithoutReplacement>) {
          c->kind = "traditional_rla_without_replacement";
          check_risk(r.alpha, "alpha", false);
          check_risk(r.beta, "beta", true);
          detail::require(r.p > 0.5 && r.p <= 1.0, "p must lie in (1/2, 1]");
          detail::require(r.ballots >= 1, "N must be positive");
          set_wald_bounds(*c, r.alpha, r.beta);
          c->mode = Mode::kTwoAtom;
          c->ballots = r.ballots;
          c->tally_lose = hardest_losing_tally(r.ballots);
          c->tally_win = winning_tally_for_share(r.p, r.ballots);
        } else if constexpr (std::is_same_v<T, BayesianAudit>) {
          c->kind = "bayesian";
          check_risk(r.gamma, "gamma", false);
          set_bayes_bounds(*c, r.gamma);
          load_prior(*c, equal_halves(r.prior));
        } else if constexpr (std::is_same_v<T, BayesianRlaAudit>) {
          c->kind = "bayesian_rla";
          check_risk(r.alpha, "alpha", false);
          set_bayes_bounds(*c, r.alpha);
          load_prior(*c, rla_transform(r.prior));
        }
      },
      params);
  if (c->mode == Mode::kTwoAtom) reserve_log_factorials(c->ballots);
  c->params = std::move(params);
  compiled_ = std::move(c);
}

AuditRule AuditRule::wald(double p0, double p1, double alpha, double beta) {
  return AuditRule(WaldWithReplacement{p0, p1, alpha, beta});
}
AuditRule AuditRule::wald_without_replacement(double p0, double p1, double alpha, double beta,
                                              std::int64_t ballots) {
  return AuditRule(WaldWithoutReplacement{p0, p1, alpha, beta, ballots});
}
AuditRule AuditRule::traditional_rla(double p, double alpha, double beta) {
  return AuditRule(TraditionalRlaWithReplacement{p, alpha, beta});
}
AuditRule AuditRule::traditional_rla_without_replacement(double p, double alpha, double beta,
                                                         std::int64_t ballots) {
  return AuditRule(TraditionalRlaWithoutReplacement{p, alpha, beta, ballots});
}
AuditRule AuditRule::bayesian(double gamma, Prior prior) {
  return AuditRule(BayesianAudit{gamma, std::move(prior)});
}
AuditRule AuditRule::bayesian_rla(double alpha, Prior prior) {
  return AuditRule(BayesianRlaAudit{alpha, std::move(prior)});
}

const RuleParams& AuditRule::params() const { return compiled_->params; }
std::string_view AuditRule::kind_name() const { return compiled_->kind; }
bool AuditRule::without_replacement() const { return compiled_->mode != Mode::kBinomial; }
std::optional<std::int64_t> AuditRule::ballots() const {
  if (compiled_->mode == Mode::kBinomial) return std::nullopt;
  return compiled_->ballots;
}
LogValue AuditRule::upper_bound() const { return LogValue::from_log(compiled_->log_upper); }
LogValue AuditRule::lower_bound() const { return LogValue::from_log(compiled_->log_lower); }
const Prior* AuditRule::effective_prior() const {
  return compiled_->effective ? &*compiled_->effective : nullptr;
}

LogValue log_statistic(const AuditRule& rule, std::int64_t n, std::int64_t k) {
  const auto& c = rule.compiled();
  check_sample(c, n, k);
  const Parts p = statistic_parts(c, n, k);
  if (p.numerator.is_zero() && p.denominator.is_zero()) {
    throw ImpossibleSample("sample (n=" + std::to_string(n) + ", k=" + std::to_string(k) +
                           ") has zero probability under every hypothesis");
  }
  return p.numerator / p.denominator;
}

Decision classify(const AuditRule& rule, LogValue statistic) {
  return classify_log(rule.compiled(), statistic.log());
}

Decision decide(const AuditRule& rule, std::int64_t n, std::int64_t k) {
  return classify(rule, log_statistic(rule, n, k));
}

ThresholdPair thresholds(const AuditRule& rule, std::int64_t n) {
  const auto& c = rule.compiled();
  check_sample(c, n, 0);
  const auto verdict = [&](std::int64_t k) { return classify_with_limits(c, n, k); };

  // First k in [0, n+1) satisfying pred, assuming pred is monotone.
  const auto first_true = [&](auto pred) {
    std::int64_t lo = 0;
    std::int64_t hi = n + 1;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (pred(mid)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  };

  ThresholdPair out;
  out.n = n;
  const std::int64_t plus =
      first_true([&](std::int64_t k) { return verdict(k) == Decision::kStopWinnerConfirmed; });
  if (plus <= n) out.k_plus = plus;
  if (c.log_lower > -kInf) {
    const std::int64_t above =
        first_true([&](std::int64_t k) { return verdict(k) != Decision::kStopHandCount; });
    if (above > 0) out.k_minus = above - 1;
  }
  return out;
}

ThresholdPair thresholds_closed_form(double p, double alpha, double beta, std::int64_t n) {
  detail::require(p > 0.5 && p < 1.0, "closed form requires p in (1/2, 1)");
  detail::require(n >= 0, "sample size must be non-negative");
  const AuditRule rule = AuditRule::traditional_rla(p, alpha, beta);
  const auto& c = rule.compiled();
  const auto is = [&](std::int64_t k, Decision d) { return classify_with_limits(c, n, k) == d; };

  const double log_odds = std::log(p / (1.0 - p));
  const double slope = std::log(0.5 / (1.0 - p)) / log_odds;

  ThresholdPair out;
  out.n = n;

  const double upper = std::log((1.0 - beta) / alpha) / log_odds + static_cast<double>(n) * slope;
  auto kp = static_cast<std::int64_t>(std::clamp(std::ceil(upper), 0.0, static_cast<double>(n + 1)));
  while (kp > 0 && is(kp - 1, Decision::kStopWinnerConfirmed)) --kp;
  while (kp <= n && !is(kp, Decision::kStopWinnerConfirmed)) ++kp;
  if (kp <= n) out.k_plus = kp;

  if (beta > 0.0) {
    const double lower = std::log(beta / (1.0 - alpha)) / log_odds + static_cast<double>(n) * slope;
    auto km = static_cast<std::int64_t>(std::clamp(std::floor(lower), -1.0, static_cast<double>(n)));
    while (km < n && is(km + 1, Decision::kStopHandCount)) ++km;
    while (km >= 0 && !is(km, Decision::kStopHandCount)) --km;
    if (km >= 0) out.k_minus = km;
  }
  return out;
}

nlohmann::json rule_to_json(const AuditRule& rule) {
  return std::visit(
      [](const auto& r) -> nlohmann::json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, WaldWithReplacement>) {
          return {{"kind", "wald"}, {"p0", r.p0}, {"p1", r.p1}, {"alpha", r.alpha}, {"beta", r.beta}};
        } else if constexpr (std::is_same_v<T, WaldWithoutReplacement>) {
          return {{"kind", "wald_without_replacement"}, {"p0", r.p0}, {"p1", r.p1},
                  {"alpha", r.alpha}, {"beta", r.beta}, {"N", r.ballots}};
        } else if constexpr (std::is_same_v<T, TraditionalRlaWithReplacement>) {
          return {{"kind", "traditional_rla"}, {"p", r.p}, {"alpha", r.alpha}, {"beta", r.beta}};
        } else if constexpr (std::is_same_v<T, TraditionalRlaWithoutReplacement>) {
          return {{"kind", "traditional_rla_without_replacement"}, {"p", r.p}, {"alpha", r.alpha},
                  {"beta", r.beta}, {"N", r.ballots}};
        } else if constexpr (std::is_same_v<T, BayesianAudit>) {
          return {{"kind", "bayesian"}, {"gamma", r.gamma}, {"prior", prior_to_json(r.prior)}};
        } else {
          return {{"kind", "bayesian_rla"}, {"alpha", r.alpha}, {"prior", prior_to_json(r.prior)}};
        }
      },
      rule.params());
}

AuditRule rule_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.contains("kind"), "rule JSON: expected object with \"kind\"");
  const auto kind = j.at("kind").get<std::string>();
  const auto num = [&](const char* key) { return j.at(key).get<double>(); };
  const auto beta = [&] { return j.value("beta", 0.0); };
  if (kind == "wald") return AuditRule::wald(num("p0"), num("p1"), num("alpha"), num("beta"));
  if (kind == "wald_without_replacement") {
    return AuditRule::wald_without_replacement(num("p0"), num("p1"), num("alpha"), num("beta"),
                                               j.at("N").get<std::int64_t>());
  }
  if (kind == "traditional_rla") return AuditRule::traditional_rla(num("p"), num("alpha"), beta());
  if (kind == "traditional_rla_without_replacement") {
    return AuditRule::traditional_rla_without_replacement(num("p"), num("alpha"), beta(),
                                                          j.at("N").get<std::int64_t>());
  }
  if (kind == "bayesian") return AuditRule::bayesian(num("gamma"), prior_from_json(j.at("prior")));
  if (kind == "bayesian_rla") {
    return AuditRule::bayesian_rla(num("alpha"), prior_from_json(j.at("prior")));
  }
  throw PreconditionError("rule JSON: unknown kind '" + kind + "'");
}

}  // namespace pollaudit
