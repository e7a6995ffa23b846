#include "pollaudit/riskeval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <thread>

#include "pollaudit/error.hpp"
#include "pollaudit/hypergeom.hpp"

namespace pollaudit {
namespace {

void check_table_population(const LookupTable& table, std::int64_t ballots, std::int64_t x) {
  detail::require(ballots >= 1, "N must be positive");
  detail::require(x >= 0 && x <= ballots, "tally x must lie in [0, N]");
  if (const auto n = table.ballots()) {
    detail::require(*n == ballots, "N does not match the table's population");
  }
  detail::require(table.schedule.back() <= ballots || !table.rule.without_replacement(),
                  "schedule exceeds N");
}

enum class Outcome { kContinue, kConfirm, kHandCount };

Outcome absorb(const ThresholdPair& row, std::int64_t k, PathRule rule) {
  if (row.k_plus && k >= *row.k_plus) return Outcome::kConfirm;
  if (rule == PathRule::kAbsorbHandCount && row.k_minus && k <= *row.k_minus) return Outcome::kHandCount;
  return Outcome::kContinue;
}

// Distribution over cumulative winner counts k in [base, base + mass.size()).
struct Frontier {
  std::int64_t base = 0;
  std::vector<double> mass{1.0};
};

template <class Transition>
StopProbabilities run_dp(const LookupTable& table, PathRule rule, Transition&& transition) {
  StopProbabilities out;
  Frontier f;
  std::int64_t drawn = 0;
  for (const auto& row : table.rows) {
    const std::int64_t step = row.n - drawn;
    Frontier next;
    next.base = f.base;
    next.mass.assign(f.mass.size() + static_cast<std::size_t>(step), 0.0);
    for (std::size_t i = 0; i < f.mass.size(); ++i) {
      if (f.mass[i] == 0.0) continue;
      const std::int64_t k = f.base + static_cast<std::int64_t>(i);
      transition(drawn, step, k, [&](std::int64_t increment, double p) {
        next.mass[i + static_cast<std::size_t>(increment)] += f.mass[i] * p;
      });
    }
    for (std::size_t i = 0; i < next.mass.size(); ++i) {
      const std::int64_t k = next.base + static_cast<std::int64_t>(i);
      switch (absorb(row, k, rule)) {
        case Outcome::kConfirm:
          out.confirm += next.mass[i];
          next.mass[i] = 0.0;
          break;
        case Outcome::kHandCount:
          out.hand_count += next.mass[i];
          next.mass[i] = 0.0;
          break;
        case Outcome::kContinue:
          break;
      }
    }
    // Trim the zero tails so the frontier only spans live states.
    const auto first = std::find_if(next.mass.begin(), next.mass.end(), [](double v) { return v != 0.0; });
    const auto last = std::find_if(next.mass.rbegin(), next.mass.rend(), [](double v) { return v != 0.0; }).base();
    if (first >= last) {
      f.mass.clear();
      break;
    }
    f.base = next.base + (first - next.mass.begin());
    f.mass.assign(first, last);
    drawn = row.n;
  }
  for (double v : f.mass) out.unresolved += v;
  return out;
}

std::uint64_t trial_seed_word(std::uint64_t v, int half) {
  return half == 0 ? (v & 0xffffffffULL) : (v >> 32);
}

double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

template <class Fn>
void parallel_for(std::int64_t count, unsigned jobs, Fn&& fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::int64_t>(count, 1))));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < count; i += workers) fn(i);
    });
  }
}

// One simulated audit; true iff it confirms the announced winner.
bool simulate_once(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                   PathRule rule, std::mt19937_64& g) {
  std::int64_t k = 0;
  std::int64_t drawn = 0;
  for (const auto& row : table.rows) {
    k += sample_hg(ballots - drawn, x - k, row.n - drawn, uniform01(g));
    drawn = row.n;
    switch (absorb(row, k, rule)) {
      case Outcome::kConfirm:
        return true;
      case Outcome::kHandCount:
        return false;
      case Outcome::kContinue:
        break;
    }
  }
  return false;
}

std::mt19937_64 trial_generator(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial) {
  std::seed_seq seq{trial_seed_word(seed, 0), trial_seed_word(seed, 1), stream,
                    trial_seed_word(trial, 0), trial_seed_word(trial, 1)};
  return std::mt19937_64(seq);
}

}  // namespace

std::string to_string(PathRule r) {
  return r == PathRule::kConfirmOnly ? "confirm_only" : "absorbing";
}

PathRule path_rule_from_string(std::string_view s) {
  if (s == "absorbing") return PathRule::kAbsorbHandCount;
  if (s == "confirm_only" || s == "confirm-only") return PathRule::kConfirmOnly;
  throw PreconditionError("unknown path rule '" + std::string(s) + "'");
}

std::string to_string(RiskMethod m) {
  switch (m) {
    case RiskMethod::kExactDp:
      return "exact_dp";
    case RiskMethod::kEnumeration:
      return "enumeration";
    case RiskMethod::kMonteCarlo:
      return "monte_carlo";
  }
  return "exact_dp";
}

StopProbabilities stop_probabilities_dp(const LookupTable& table, std::int64_t ballots,
                                        std::int64_t x, DpOptions options) {
  detail::require(table.rule.without_replacement(),
                  "exact_risk_dp: with-replacement table; use exact_risk_dp_binomial");
  check_table_population(table, ballots, x);
  reserve_log_factorials(ballots);
  return run_dp(table, options.path_rule,
                [&](std::int64_t drawn, std::int64_t step, std::int64_t k, auto&& emit) {
    const std::int64_t remaining = ballots - drawn;
    const std::int64_t winners_left = x - k;
    if (winners_left < 0 || winners_left > remaining) return;
    const HgRow row = hg_row(remaining, winners_left, step, options.relative_cutoff);
    for (std::size_t j = 0; j < row.mass.size(); ++j) {
      emit(row.first + static_cast<std::int64_t>(j), row.mass[j]);
    }
  });
}

double exact_risk_dp(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                     PathRule path_rule) {
  return stop_probabilities_dp(table, ballots, x, DpOptions{path_rule, 0.0}).confirm;
}

StopProbabilities stop_probabilities_binomial(const LookupTable& table, std::int64_t ballots,
                                              std::int64_t x, PathRule path_rule) {
  detail::require(!table.rule.without_replacement(),
                  "exact_risk_dp_binomial: table samples without replacement");
  check_table_population(table, ballots, x);
  const double share = static_cast<double>(x) / static_cast<double>(ballots);
  return run_dp(table, path_rule, [&](std::int64_t, std::int64_t step, std::int64_t, auto&& emit) {
    for (std::int64_t j = 0; j <= step; ++j) {
      double lp = log_binomial(step, j).log();
      lp += j == 0 ? 0.0 : (share > 0.0 ? static_cast<double>(j) * std::log(share) : -INFINITY);
      lp += j == step ? 0.0
                      : (share < 1.0 ? static_cast<double>(step - j) * std::log1p(-share) : -INFINITY);
      const double p = std::exp(lp);
      if (p > 0.0) emit(j, p);
    }
  });
}

double exact_risk_dp_binomial(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                              PathRule path_rule) {
  return stop_probabilities_binomial(table, ballots, x, path_rule).confirm;
}

StopProbabilities stop_probabilities_enum(const LookupTable& table, std::int64_t ballots,
                                          std::int64_t x, PathRule path_rule) {
  detail::require(ballots <= kMaxEnumerationBallots, "exact_risk_enum: N must be <= 15");
  detail::require(table.rule.without_replacement(),
                  "exact_risk_enum: enumeration models sampling without replacement");
  check_table_population(table, ballots, x);

  // Every placement of the x winner ballots in the draw order is equally
  // likely; bit i set means the i-th ballot drawn is for the announced winner.
  std::uint64_t confirm = 0;
  std::uint64_t hand = 0;
  std::uint64_t total = 0;
  const std::uint32_t limit = 1u << ballots;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (std::popcount(mask) != x) continue;
    ++total;
    for (const auto& row : table.rows) {
      const std::uint32_t prefix = row.n >= 32 ? mask : (mask & ((1u << row.n) - 1u));
      const Outcome o = absorb(row, std::popcount(prefix), path_rule);
      if (o == Outcome::kConfirm) {
        ++confirm;
        break;
      }
      if (o == Outcome::kHandCount) {
        ++hand;
        break;
      }
    }
  }
  const auto t = static_cast<double>(total);
  return {static_cast<double>(confirm) / t, static_cast<double>(hand) / t,
          static_cast<double>(total - confirm - hand) / t};
}

double exact_risk_enum(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                       PathRule path_rule) {
  return stop_probabilities_enum(table, ballots, x, path_rule).confirm;
}

Estimate simulate_risk(const LookupTable& table, std::int64_t ballots, std::int64_t x,
                       std::int64_t trials, std::uint64_t seed, unsigned jobs, PathRule path_rule) {
  detail::require(trials >= 1, "simulate_risk: trials must be >= 1");
  detail::require(table.rule.without_replacement(),
                  "simulate_risk: table samples with replacement");
  check_table_population(table, ballots, x);
  reserve_log_factorials(ballots);

  std::vector<std::uint8_t> hit(static_cast<std::size_t>(trials), 0);
  parallel_for(trials, jobs, [&](std::int64_t i) {
    auto g = trial_generator(seed, 0, static_cast<std::uint64_t>(i));
    hit[static_cast<std::size_t>(i)] = simulate_once(table, ballots, x, path_rule, g) ? 1 : 0;
  });
  Estimate e;
  e.trials = trials;
  e.seed = seed;
  for (auto h : hit) e.successes += h;
  e.value = static_cast<double>(e.successes) / static_cast<double>(trials);
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(trials));
  return e;
}

PriorErrors prior_weighted_errors(const LookupTable& table, const Prior& prior,
                                  const ErrorOptions& options) {
  const std::int64_t ballots = prior.ballots();
  detail::require(prior.loser_mass() > 0.0, "prior_weighted_errors: prior has no losing mass");
  detail::require(prior.winner_mass() > 0.0, "prior_weighted_errors: prior has no winning mass");
  check_table_population(table, ballots, 0);

  PriorErrors out;
  if (ballots <= options.exact_cap) {
    out.method = RiskMethod::kExactDp;
    std::vector<StopProbabilities> stops(static_cast<std::size_t>(ballots) + 1);
    parallel_for(ballots + 1, options.jobs, [&](std::int64_t x) {
      if (prior.mass(x) == 0.0) return;
      stops[static_cast<std::size_t>(x)] = table.rule.without_replacement()
                                               ? stop_probabilities_dp(table, ballots, x)
                                               : stop_probabilities_binomial(table, ballots, x);
    });
    for (std::int64_t x = 0; x <= ballots; ++x) {
      const double f = prior.mass(x);
      if (f == 0.0) continue;
      const auto& s = stops[static_cast<std::size_t>(x)];
      if (is_winning_tally(ballots, x)) {
        out.unnecessary_hand_count += f * (1.0 - s.confirm);
        out.decisive_hand_count += f * s.hand_count;
        out.unresolved_given_winner += f * s.unresolved;
      } else {
        out.miss += f * s.confirm;
      }
    }
    out.miss /= prior.loser_mass();
    out.unnecessary_hand_count /= prior.winner_mass();
    out.decisive_hand_count /= prior.winner_mass();
    out.unresolved_given_winner /= prior.winner_mass();
    return out;
  }

  // Monte Carlo: each trial draws a tally from the prior conditioned on the
  // hypothesis, then runs one audit.
  detail::require(table.rule.without_replacement(),
                  "prior_weighted_errors: Monte Carlo fallback needs a without-replacement table");
  out.method = RiskMethod::kMonteCarlo;
  reserve_log_factorials(ballots);
  std::vector<double> lose_cdf;
  std::vector<double> win_cdf;
  std::vector<std::int64_t> lose_x;
  std::vector<std::int64_t> win_x;
  for (std::int64_t x = 0; x <= ballots; ++x) {
    if (prior.mass(x) == 0.0) continue;
    auto& cdf = is_winning_tally(ballots, x) ? win_cdf : lose_cdf;
    (is_winning_tally(ballots, x) ? win_x : lose_x).push_back(x);
    cdf.push_back((cdf.empty() ? 0.0 : cdf.back()) + prior.mass(x));
  }
  const auto draw = [](const std::vector<double>& cdf, const std::vector<std::int64_t>& xs, double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
    return xs[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), xs.size() - 1)];
  };
  // 0 = confirm, 1 = hand count, 2 = unresolved
  const auto outcome = [&](std::mt19937_64& g, std::int64_t x) {
    std::int64_t k = 0;
    std::int64_t drawn = 0;
    for (const auto& row : table.rows) {
      k += sample_hg(ballots - drawn, x - k, row.n - drawn, uniform01(g));
      drawn = row.n;
      const Outcome o = absorb(row, k, PathRule::kAbsorbHandCount);
      if (o == Outcome::kConfirm) return 0;
      if (o == Outcome::kHandCount) return 1;
    }
    return 2;
  };
  std::vector<std::uint8_t> lose_res(static_cast<std::size_t>(options.trials));
  std::vector<std::uint8_t> win_res(static_cast<std::size_t>(options.trials));
  parallel_for(options.trials, options.jobs, [&](std::int64_t i) {
    auto gl = trial_generator(options.seed, 1, static_cast<std::uint64_t>(i));
    lose_res[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(outcome(gl, draw(lose_cdf, lose_x, uniform01(gl))));
    auto gw = trial_generator(options.seed, 2, static_cast<std::uint64_t>(i));
    win_res[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(outcome(gw, draw(win_cdf, win_x, uniform01(gw))));
  });
  const auto t = static_cast<double>(options.trials);
  out.miss = static_cast<double>(std::count(lose_res.begin(), lose_res.end(), 0)) / t;
  out.unnecessary_hand_count = static_cast<double>(std::count_if(win_res.begin(), win_res.end(), [](auto v) { return v != 0; })) / t;
  out.decisive_hand_count = static_cast<double>(std::count(win_res.begin(), win_res.end(), 1)) / t;
  out.unresolved_given_winner = static_cast<double>(std::count(win_res.begin(), win_res.end(), 2)) / t;
  return out;
}

RiskReport max_risk(const LookupTable& table, std::int64_t ballots, const MaxRiskOptions& options) {
  check_table_population(table, ballots, 0);
  RiskReport report;
  report.method = options.method;
  report.path_rule = options.path_rule;
  report.ballots = ballots;
  const std::int64_t hardest = hardest_losing_tally(ballots);

  std::vector<std::int64_t> xs;
  if (options.method == RiskMethod::kMonteCarlo) {
    xs = options.extra_tallies;
    for (auto x : xs) {
      detail::require(x >= 0 && x <= hardest, "max_risk: extra tallies must be losing tallies");
    }
    xs.push_back(hardest);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    report.trials = options.trials;
    report.seed = options.seed;
  } else {
    if (options.method == RiskMethod::kExactDp) {
      detail::require(ballots <= options.exact_cap,
                      "max_risk: N exceeds the exact-scan cap (" + std::to_string(options.exact_cap) + ")");
    }
    for (std::int64_t x = 0; x <= hardest; ++x) xs.push_back(x);
  }

  report.tallies.resize(xs.size());
  const unsigned inner_jobs = options.method == RiskMethod::kMonteCarlo ? options.jobs : 1;
  const unsigned outer_jobs = options.method == RiskMethod::kMonteCarlo ? 1 : options.jobs;
  parallel_for(static_cast<std::int64_t>(xs.size()), outer_jobs, [&](std::int64_t i) {
    const std::int64_t x = xs[static_cast<std::size_t>(i)];
    TallyRisk t{x, 0.0, std::nullopt};
    switch (options.method) {
      case RiskMethod::kExactDp:
        t.risk = table.rule.without_replacement() ? exact_risk_dp(table, ballots, x, options.path_rule)
                                                  : exact_risk_dp_binomial(table, ballots, x, options.path_rule);
        break;
      case RiskMethod::kEnumeration:
        t.risk = exact_risk_enum(table, ballots, x, options.path_rule);
        break;
      case RiskMethod::kMonteCarlo: {
        const Estimate e = simulate_risk(table, ballots, x, options.trials, options.seed, inner_jobs,
                                           options.path_rule);
        t.risk = e.value;
        t.std_error = e.std_error;
        break;
      }
    }
    report.tallies[static_cast<std::size_t>(i)] = t;
  });

  for (const auto& t : report.tallies) {
    if (t.risk >= report.max_risk) {
      report.max_risk = t.risk;
      report.argmax = t.x;
    }
  }
  return report;
}

nlohmann::json risk_report_to_json(const RiskReport& report) {
  nlohmann::json tallies = nlohmann::json::array();
  for (const auto& t : report.tallies) {
    nlohmann::json e = {{"x", t.x}, {"risk", t.risk}};
    if (t.std_error) e["std_error"] = *t.std_error;
    tallies.push_back(std::move(e));
  }
  nlohmann::json j = {{"method", to_string(report.method)},
                      {"path_rule", to_string(report.path_rule)},
                      {"N", report.ballots},
                      {"max_risk", report.max_risk},
                      {"argmax", report.argmax},
                      {"tallies", std::move(tallies)}};
  if (report.trials) j["trials"] = *report.trials;
  if (report.seed) j["seed"] = *report.seed;
  return j;
}

std::string risk_curve_csv(const RiskReport& report) {
  const bool with_se = report.method == RiskMethod::kMonteCarlo;
  std::string out = with_se ? "x,risk,std_error\n" : "x,risk\n";
  char buf[64];
  for (const auto& t : report.tallies) {
    out += std::to_string(t.x);
    std::snprintf(buf, sizeof buf, ",%.17g", t.risk);
    out += buf;
    if (with_se) {
      std::snprintf(buf, sizeof buf, ",%.17g", t.std_error.value_or(0.0));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace pollaudit
