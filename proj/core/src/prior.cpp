#include "pollaudit/prior.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "pollaudit/error.hpp"
#include "pollaudit/hypergeom.hpp"
#include "pollaudit/log_value.hpp"

namespace pollaudit {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

nlohmann::json named(std::int64_t ballots, const char* family, nlohmann::json params) {
  return {{"N", ballots}, {"family", family}, {"params", std::move(params)}};
}

}  // namespace

Prior Prior::from_weights(std::int64_t ballots, std::vector<double> weights,
                          nlohmann::json descriptor) {
  detail::require(ballots >= 1, "Prior: N must be positive");
  detail::require(weights.size() == static_cast<std::size_t>(ballots) + 1,
                  "Prior: expected N+1 weights");
  CompensatedSum total;
  for (double w : weights) {
    detail::require(std::isfinite(w) && w >= 0.0, "Prior: weights must be finite and >= 0");
    total.add(w);
  }
  detail::require(total.value() > 0.0, "Prior: weights must have positive total");
  Prior p;
  p.ballots_ = ballots;
  p.mass_ = std::move(weights);
  p.log_mass_.resize(p.mass_.size());
  const double t = total.value();
  for (std::size_t i = 0; i < p.mass_.size(); ++i) {
    p.mass_[i] /= t;
    p.log_mass_[i] = p.mass_[i] > 0.0 ? std::log(p.mass_[i]) : kNegInf;
  }
  p.descriptor_ = std::move(descriptor);
  p.finish();
  return p;
}

Prior Prior::from_log_weights(std::int64_t ballots, std::vector<double> log_weights,
                              nlohmann::json descriptor) {
  detail::require(ballots >= 1, "Prior: N must be positive");
  detail::require(log_weights.size() == static_cast<std::size_t>(ballots) + 1,
                  "Prior: expected N+1 log weights");
  std::vector<LogValue> lv;
  lv.reserve(log_weights.size());
  for (double w : log_weights) {
    detail::require(!std::isnan(w) && w != std::numeric_limits<double>::infinity(),
                    "Prior: log weights must be finite or -inf");
    lv.push_back(LogValue::from_log(w));
  }
  const LogValue total = log_sum(lv);
  detail::require(!total.is_zero(), "Prior: weights must have positive total");
  Prior p;
  p.ballots_ = ballots;
  p.log_mass_ = std::move(log_weights);
  p.mass_.resize(p.log_mass_.size());
  for (std::size_t i = 0; i < p.log_mass_.size(); ++i) {
    if (p.log_mass_[i] != kNegInf) p.log_mass_[i] -= total.log();
    p.mass_[i] = std::exp(p.log_mass_[i]);
  }
  p.descriptor_ = std::move(descriptor);
  p.finish();
  return p;
}

void Prior::finish() {
  CompensatedSum win;
  CompensatedSum lose;
  for (std::int64_t x = 0; x <= ballots_; ++x) {
    (is_winning_tally(ballots_, x) ? win : lose).add(mass_[static_cast<std::size_t>(x)]);
  }
  winner_mass_ = win.value();
  loser_mass_ = lose.value();
}

Prior two_point(std::int64_t ballots, std::int64_t losing_tally, std::int64_t winning_tally) {
  detail::require(ballots >= 1, "two_point: N must be positive");
  detail::require(losing_tally >= 0 && !is_winning_tally(ballots, losing_tally),
                  "two_point: x0 must be a losing tally in [0, floor(N/2)]");
  detail::require(winning_tally <= ballots && is_winning_tally(ballots, winning_tally),
                  "two_point: x1 must be a winning tally in (N/2, N]");
  std::vector<double> w(static_cast<std::size_t>(ballots) + 1, 0.0);
  w[static_cast<std::size_t>(losing_tally)] = 0.5;
  w[static_cast<std::size_t>(winning_tally)] = 0.5;
  return Prior::from_weights(ballots, std::move(w),
                             named(ballots, "two_point",
                                   {{"x0", losing_tally}, {"x1", winning_tally}}));
}

Prior beta_shape(std::int64_t ballots, double a, double b, BetaDiscretization discretization) {
  detail::require(a > 0.0 && b > 0.0, "beta_shape: a and b must be positive");
  const bool pointwise = discretization == BetaDiscretization::kPointwise;
  detail::require(ballots >= (pointwise ? 2 : 1),
                  "beta_shape: N too small for the requested discretization");
  std::vector<double> lw(static_cast<std::size_t>(ballots) + 1, kNegInf);
  const double n = static_cast<double>(ballots);
  if (pointwise) {
    for (std::int64_t x = 1; x < ballots; ++x) {
      const double t = static_cast<double>(x) / n;
      lw[static_cast<std::size_t>(x)] = (a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t);
    }
  } else {
    const double tail = std::lgamma(n + a + b);
    for (std::int64_t x = 0; x <= ballots; ++x) {
      const double xd = static_cast<double>(x);
      lw[static_cast<std::size_t>(x)] = log_binomial(ballots, x).log() +
                                        std::lgamma(xd + a) + std::lgamma(n - xd + b) - tail;
    }
  }
  return Prior::from_log_weights(
      ballots, std::move(lw),
      named(ballots, "beta",
            {{"a", a}, {"b", b}, {"discretization", pointwise ? "pointwise" : "beta_binomial"}}));
}

Prior uniform_winning(std::int64_t ballots) {
  detail::require(ballots >= 1, "uniform_winning: N must be positive");
  std::vector<double> w(static_cast<std::size_t>(ballots) + 1, 0.0);
  for (std::int64_t x = smallest_winning_tally(ballots); x <= ballots; ++x) {
    w[static_cast<std::size_t>(x)] = 1.0;
  }
  return Prior::from_weights(ballots, std::move(w),
                             named(ballots, "uniform_winning", nlohmann::json::object()));
}

Prior uniform_tallies(std::int64_t ballots) {
  detail::require(ballots >= 1, "uniform: N must be positive");
  return Prior::from_weights(ballots, std::vector<double>(static_cast<std::size_t>(ballots) + 1, 1.0),
                             named(ballots, "uniform", nlohmann::json::object()));
}

Prior equal_halves(const Prior& prior) {
  detail::require(prior.winner_mass() > 0.0, "equal_halves: prior has no winning mass");
  detail::require(prior.loser_mass() > 0.0, "equal_halves: prior has no losing mass");
  const std::int64_t n = prior.ballots();
  const double lw = std::log(0.5) - std::log(prior.winner_mass());
  const double ll = std::log(0.5) - std::log(prior.loser_mass());
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  for (std::int64_t x = 0; x <= n; ++x) {
    const double v = prior.log_mass(x);
    out[static_cast<std::size_t>(x)] = v == kNegInf ? kNegInf : v + (is_winning_tally(n, x) ? lw : ll);
  }
  nlohmann::json desc = nullptr;
  if (!prior.descriptor().is_null()) {
    desc = named(n, "equal_halves", {{"base", prior.descriptor()}});
  }
  return Prior::from_log_weights(n, std::move(out), std::move(desc));
}

Prior rla_transform(const Prior& prior) {
  detail::require(prior.winner_mass() > 0.0, "rla_transform: prior has no winning mass");
  const std::int64_t n = prior.ballots();
  const double lw = std::log(0.5) - std::log(prior.winner_mass());
  std::vector<double> out(static_cast<std::size_t>(n) + 1, kNegInf);
  for (std::int64_t x = smallest_winning_tally(n); x <= n; ++x) {
    const double v = prior.log_mass(x);
    if (v != kNegInf) out[static_cast<std::size_t>(x)] = v + lw;
  }
  out[static_cast<std::size_t>(hardest_losing_tally(n))] = std::log(0.5);
  // Already-transformed input keeps its descriptor so the transform is
  // idempotent in serialized form as well.
  nlohmann::json desc = nullptr;
  if (!prior.descriptor().is_null()) {
    desc = prior.descriptor().value("family", "") == "rla_transform"
               ? prior.descriptor()
               : named(n, "rla_transform", {{"base", prior.descriptor()}});
  }
  return Prior::from_log_weights(n, std::move(out), std::move(desc));
}

nlohmann::json prior_to_json(const Prior& prior, bool force_mass) {
  if (!force_mass && !prior.descriptor().is_null()) return prior.descriptor();
  return {{"N", prior.ballots()},
          {"mass", std::vector<double>(prior.mass().begin(), prior.mass().end())}};
}

Prior prior_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.contains("N"), "prior JSON: expected object with \"N\"");
  const auto ballots = j.at("N").get<std::int64_t>();
  if (j.contains("mass")) {
    return Prior::from_weights(ballots, j.at("mass").get<std::vector<double>>());
  }
  detail::require(j.contains("family"), "prior JSON: expected \"mass\" or \"family\"");
  const auto family = j.at("family").get<std::string>();
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  if (family == "two_point") {
    return two_point(ballots, params.at("x0").get<std::int64_t>(),
                     params.at("x1").get<std::int64_t>());
  }
  if (family == "beta") {
    const std::string disc = params.value("discretization", "pointwise");
    detail::require(disc == "pointwise" || disc == "beta_binomial",
                    "prior JSON: unknown beta discretization '" + disc + "'");
    return beta_shape(ballots, params.at("a").get<double>(), params.at("b").get<double>(),
                      disc == "pointwise" ? BetaDiscretization::kPointwise
                                          : BetaDiscretization::kBetaBinomial);
  }
  if (family == "uniform_winning") return uniform_winning(ballots);
  if (family == "uniform") return uniform_tallies(ballots);
  if (family == "rla_transform" || family == "equal_halves") {
    const Prior base = prior_from_json(params.at("base"));
    detail::require(base.ballots() == ballots, "prior JSON: base prior has a different N");
    return family == "rla_transform" ? rla_transform(base) : equal_halves(base);
  }
  throw PreconditionError("prior JSON: unknown family '" + family + "'");
}

}  // namespace pollaudit
