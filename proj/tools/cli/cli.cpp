#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "pollaudit/error.hpp"
#include "pollaudit/riskeval.hpp"
#include "pollaudit/session.hpp"
#include "pollaudit/tables.hpp"

namespace pollaudit::cli {
namespace {

// A flag combination that cannot run; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_file(const std::string& path, const std::string& flag) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError(flag + ": cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

std::pair<double, double> parse_pair(std::string_view text, const std::string& flag) {
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) throw UsageError(flag + ": expected two comma-separated numbers");
  try {
    std::size_t used = 0;
    const std::string a(text.substr(0, comma));
    const std::string b(text.substr(comma + 1));
    const double x = std::stod(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    const double y = std::stod(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
    return {x, y};
  } catch (const std::logic_error&) {
    throw UsageError(flag + ": cannot parse '" + std::string(text) + "'");
  }
}

Prior parse_prior(const std::string& text, std::int64_t ballots) {
  const std::string flag = "--prior";
  const auto colon = text.find(':');
  const std::string family = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (family == "beta" || family == "beta-binomial") {
      const auto [a, b] = parse_pair(arg, flag);
      return beta_shape(ballots, a, b,
                        family == "beta" ? BetaDiscretization::kPointwise : BetaDiscretization::kBetaBinomial);
    }
    if (family == "uniform-winning" && arg.empty()) return uniform_winning(ballots);
    if (family == "uniform" && arg.empty()) return uniform_tallies(ballots);
    if (family == "two-point") {
      const auto [x0, x1] = parse_pair(arg, flag);
      if (x0 != std::floor(x0) || x1 != std::floor(x1)) throw UsageError(flag + ": tallies must be integers");
      return two_point(ballots, static_cast<std::int64_t>(x0), static_cast<std::int64_t>(x1));
    }
    if (family == "file") {
      Prior p = prior_from_json(nlohmann::json::parse(read_file(arg, flag)));
      if (p.ballots() != ballots) {
        throw UsageError(flag + ": prior file has N=" + std::to_string(p.ballots()) + ", expected " +
                         std::to_string(ballots));
      }
      return p;
    }
  } catch (const PreconditionError& e) {
    throw UsageError(flag + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(flag + ": " + e.what());
  }
  throw UsageError(flag + ": unknown prior '" + text +
                   "' (beta:a,b | beta-binomial:a,b | uniform-winning | uniform | two-point:x0,x1 | file:PATH)");
}

struct RuleFlags {
  std::string audit;
  std::optional<double> gamma, alpha, beta, p, p0, p1;
  std::optional<std::int64_t> ballots;
  std::optional<std::string> prior;
  std::string schedule = "default";
  unsigned jobs = 1;
};

void add_rule_flags(CLI::App* app, RuleFlags& f) {
  app->add_option("--audit", f.audit, "bayes | bayes-rla | wald | wald-wor | rla | rla-wor | bravo | bravo-wor")
      ->required()
      ->check(CLI::IsMember({"bayes", "bayes-rla", "wald", "wald-wor", "rla", "rla-wor", "bravo", "bravo-wor"}));
  app->add_option("--gamma", f.gamma, "Upset probability bound (bayes)");
  app->add_option("--alpha", f.alpha, "Risk limit");
  app->add_option("--beta", f.beta, "Unnecessary hand count bound (wald/rla; defaults to --alpha)");
  app->add_option("--p", f.p, "Assumed winner share (rla/bravo)");
  app->add_option("--p0", f.p0, "Winner share when the outcome is wrong (wald; default 0.5)");
  app->add_option("--p1", f.p1, "Winner share when the outcome is right (wald)");
  app->add_option("--N", f.ballots, "Ballots cast")->check(CLI::PositiveNumber);
  app->add_option("--prior", f.prior, "beta:a,b | beta-binomial:a,b | uniform-winning | uniform | two-point:x0,x1 | file:PATH");
  app->add_option("--schedule", f.schedule, "\"200x2..51200\", \"9..78\", \"10,20,40\" or \"default\"");
  app->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::Range(1u, 1024u));
}

double need(const std::optional<double>& v, const std::string& flag, const std::string& audit) {
  if (!v) throw UsageError(flag + " is required for --audit " + audit);
  return *v;
}

std::int64_t need_ballots(const RuleFlags& f) {
  if (!f.ballots) throw UsageError("--N is required for --audit " + f.audit);
  return *f.ballots;
}

AuditRule make_rule(const RuleFlags& f) {
  const auto& a = f.audit;
  if (a != "bayes" && a != "bayes-rla" && f.prior) throw UsageError("--prior only applies to bayes and bayes-rla");
  if (a == "bayes" && f.alpha) throw UsageError("--alpha does not apply to --audit bayes; use --gamma");
  if (a != "bayes" && f.gamma) throw UsageError("--gamma only applies to --audit bayes");
  if ((a == "bravo" || a == "bravo-wor") && f.beta) throw UsageError("--beta is fixed at 0 for --audit " + a);
  try {
    if (a == "bayes") {
      const std::int64_t n = need_ballots(f);
      return AuditRule::bayesian(need(f.gamma, "--gamma", a), parse_prior(f.prior.value_or("beta:0.5,0.5"), n));
    }
    if (a == "bayes-rla") {
      const std::int64_t n = need_ballots(f);
      return AuditRule::bayesian_rla(need(f.alpha, "--alpha", a), parse_prior(f.prior.value_or("uniform-winning"), n));
    }
    const double alpha = need(f.alpha, "--alpha", a);
    const double beta = f.beta.value_or(alpha);
    if (a == "wald") return AuditRule::wald(f.p0.value_or(0.5), need(f.p1, "--p1", a), alpha, beta);
    if (a == "wald-wor") {
      return AuditRule::wald_without_replacement(f.p0.value_or(0.5), need(f.p1, "--p1", a), alpha, beta,
                                                 need_ballots(f));
    }
    if (a == "rla") return AuditRule::traditional_rla(need(f.p, "--p", a), alpha, beta);
    if (a == "rla-wor") {
      return AuditRule::traditional_rla_without_replacement(need(f.p, "--p", a), alpha, beta, need_ballots(f));
    }
    if (a == "bravo") return AuditRule::bravo(need(f.p, "--p", a), alpha);
    if (a == "bravo-wor") {
      return AuditRule::traditional_rla_without_replacement(need(f.p, "--p", a), alpha, 0.0, need_ballots(f));
    }
  } catch (const PreconditionError& e) {
    throw UsageError("invalid parameters for --audit " + a + ": " + e.what());
  }
  throw UsageError("--audit: unknown family '" + a + "'");
}

Schedule make_schedule(const RuleFlags& f, const AuditRule& rule) {
  Schedule s = [&] {
    try {
      return Schedule::parse(f.schedule);
    } catch (const PreconditionError& e) {
      throw UsageError(std::string("--schedule: ") + e.what());
    }
  }();
  const std::optional<std::int64_t> n = rule.ballots() ? rule.ballots() : f.ballots;
  if (n && s.back() > *n && rule.without_replacement()) {
    throw UsageError("--schedule: last round " + std::to_string(s.back()) + " exceeds N=" + std::to_string(*n));
  }
  return s;
}

TableFormat parse_format(const std::string& s) { return s == "json" ? TableFormat::kJson : TableFormat::kCsv; }

// The table-driven commands evaluate risk for a known population.
std::int64_t population(const RuleFlags& f, const AuditRule& rule) {
  if (const auto n = rule.ballots()) return *n;
  if (const Prior* p = rule.effective_prior()) return p->ballots();
  if (!f.ballots) throw UsageError("--N is required to evaluate risk for --audit " + f.audit);
  return *f.ballots;
}

// --- table ----------------------------------------------------------------

struct TableCmd {
  RuleFlags rule;
  std::string format = "csv";
};

int run_table(const TableCmd& c, std::ostream& out) {
  const AuditRule rule = make_rule(c.rule);
  const Schedule schedule = make_schedule(c.rule, rule);
  out << emit_table(build_table(rule, schedule, c.rule.jobs), parse_format(c.format));
  return kExitOk;
}

// --- risk -----------------------------------------------------------------

struct RiskCmd {
  RuleFlags rule;
  std::string format = "csv";
  std::vector<std::int64_t> xs;
  bool scan_losing = false;
  bool errors = false;
  std::string method = "exact";
  std::string path_rule = "absorbing";
  std::int64_t exact_cap = 2000;
};

int run_risk(const RiskCmd& c, std::ostream& out, std::ostream& err) {
  if (c.xs.empty() && !c.scan_losing && !c.errors) {
    throw UsageError("risk: give --x, --scan-losing or --errors");
  }
  const AuditRule rule = make_rule(c.rule);
  const Schedule schedule = make_schedule(c.rule, rule);
  const std::int64_t n = population(c.rule, rule);
  const PathRule path = path_rule_from_string(c.path_rule);
  const bool enumerate = c.method == "enum";
  if (enumerate && n > kMaxEnumerationBallots) {
    throw UsageError("--method enum: N must be <= " + std::to_string(kMaxEnumerationBallots));
  }
  if (enumerate && !rule.without_replacement()) {
    throw UsageError("--method enum: enumeration needs a without-replacement audit");
  }
  for (auto x : c.xs) {
    if (x < 0 || x > n) throw UsageError("--x " + std::to_string(x) + " outside [0, N]");
  }
  const LookupTable table = build_table(rule, schedule, c.rule.jobs);
  const bool json = c.format == "json";
  nlohmann::json doc = nlohmann::json::object();

  if (!c.xs.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    if (!json) out << "x,confirm,hand_count,unresolved\n";
    for (auto x : c.xs) {
      const StopProbabilities s = enumerate ? stop_probabilities_enum(table, n, x, path)
                                  : rule.without_replacement()
                                      ? stop_probabilities_dp(table, n, x, DpOptions{path, 0.0})
                                      : stop_probabilities_binomial(table, n, x, path);
      if (json) {
        rows.push_back({{"x", x}, {"confirm", s.confirm}, {"hand_count", s.hand_count},
                        {"unresolved", s.unresolved}, {"winning", is_winning_tally(n, x)}});
      } else {
        out << x << "," << fmt(s.confirm) << "," << fmt(s.hand_count) << "," << fmt(s.unresolved) << "\n";
      }
    }
    doc["tallies"] = std::move(rows);
  }
  if (c.scan_losing) {
    MaxRiskOptions o;
    o.method = enumerate ? RiskMethod::kEnumeration : RiskMethod::kExactDp;
    o.path_rule = path;
    o.exact_cap = c.exact_cap;
    o.jobs = c.rule.jobs;
    if (!enumerate && n > c.exact_cap) {
      throw UsageError("--scan-losing: N=" + std::to_string(n) + " exceeds --exact-cap " + std::to_string(c.exact_cap) +
                       "; use simulate");
    }
    const RiskReport report = max_risk(table, n, o);
    if (json) {
      doc["scan"] = risk_report_to_json(report);
    } else {
      out << risk_curve_csv(report);
    }
    err << "max_risk=" << fmt(report.max_risk) << " at x=" << report.argmax << "\n";
  }
  if (c.errors) {
    const Prior* prior = rule.effective_prior();
    if (!prior) throw UsageError("--errors needs a Bayesian audit (bayes or bayes-rla)");
    if (n > c.exact_cap) throw UsageError("--errors: N exceeds --exact-cap " + std::to_string(c.exact_cap));
    ErrorOptions o;
    o.exact_cap = c.exact_cap;
    o.jobs = c.rule.jobs;
    const PriorErrors e = prior_weighted_errors(table, *prior, o);
    if (json) {
      doc["errors"] = {{"miss", e.miss},
                       {"unnecessary_hand_count", e.unnecessary_hand_count},
                       {"decisive_hand_count", e.decisive_hand_count},
                       {"unresolved_given_winner", e.unresolved_given_winner},
                       {"method", to_string(e.method)}};
    } else {
      out << "miss,unnecessary_hand_count,decisive_hand_count,unresolved_given_winner\n"
          << fmt(e.miss) << "," << fmt(e.unnecessary_hand_count) << "," << fmt(e.decisive_hand_count) << ","
          << fmt(e.unresolved_given_winner) << "\n";
    }
  }
  if (json) out << doc.dump(2) << "\n";
  return kExitOk;
}

// --- simulate -------------------------------------------------------------

struct SimulateCmd {
  RuleFlags rule;
  std::string format = "csv";
  std::optional<std::int64_t> x;
  std::vector<std::int64_t> extra;
  std::int64_t trials = 10000;
  std::optional<std::uint64_t> seed;
  std::string path_rule = "confirm-only";
};

int run_simulate(const SimulateCmd& c, std::ostream& out, std::ostream& err) {
  if (!c.seed) throw UsageError("--seed is required for simulate");
  const AuditRule rule = make_rule(c.rule);
  if (!rule.without_replacement()) throw UsageError("simulate: needs a without-replacement audit");
  const Schedule schedule = make_schedule(c.rule, rule);
  const std::int64_t n = population(c.rule, rule);
  const LookupTable table = build_table(rule, schedule, c.rule.jobs);
  const PathRule path = path_rule_from_string(c.path_rule);

  RiskReport report;
  if (c.x && c.extra.empty()) {
    if (*c.x < 0 || *c.x > n) throw UsageError("--x outside [0, N]");
    const Estimate e = simulate_risk(table, n, *c.x, c.trials, *c.seed, c.rule.jobs, path);
    report.method = RiskMethod::kMonteCarlo;
    report.path_rule = path;
    report.ballots = n;
    report.tallies = {{*c.x, e.value, e.std_error}};
    report.max_risk = e.value;
    report.argmax = *c.x;
    report.trials = c.trials;
    report.seed = *c.seed;
  } else {
    if (c.x && *c.x != hardest_losing_tally(n)) {
      throw UsageError("--x with --extra-x: the scan always includes floor(N/2); list other tallies in --extra-x");
    }
    MaxRiskOptions o;
    o.method = RiskMethod::kMonteCarlo;
    o.path_rule = path;
    o.trials = c.trials;
    o.seed = *c.seed;
    o.extra_tallies = c.extra;
    o.jobs = c.rule.jobs;
    for (auto x : c.extra) {
      if (x < 0 || x > hardest_losing_tally(n)) throw UsageError("--extra-x must be losing tallies");
    }
    report = max_risk(table, n, o);
  }
  if (c.format == "json") {
    out << risk_report_to_json(report).dump(2) << "\n";
  } else {
    out << risk_curve_csv(report);
  }
  err << "estimate=" << fmt(report.max_risk) << " at x=" << report.argmax << " (" << c.trials << " trials, seed "
      << *c.seed << ", " << to_string(path) << ")\n";
  return kExitOk;
}

// --- compare and the reference presets ---------------------------------------

constexpr std::int64_t kReferenceBallots = 100000;

struct Figure1 {
  std::vector<double> gammas{0.1, 0.05, 0.005};
};

std::vector<LookupTable> figure1_tables(unsigned jobs, std::vector<std::string>& labels) {
  const Prior beta = beta_shape(kReferenceBallots, 0.5, 0.5);
  const Prior flat = uniform_winning(kReferenceBallots);
  std::vector<LookupTable> tables;
  for (double g : Figure1{}.gammas) {
    tables.push_back(build_table(AuditRule::bayesian_rla(g, flat), Schedule::doubling_default(), jobs));
    tables.push_back(build_table(AuditRule::bayesian(g, beta), Schedule::doubling_default(), jobs));
    labels.push_back("rla_" + fmt(g));
    labels.push_back("bayes_" + fmt(g));
  }
  return tables;
}

std::vector<LookupTable> figure2_tables(unsigned jobs, std::vector<std::string>& labels) {
  constexpr std::int64_t n = 100;
  constexpr double risk = 0.001;
  const Schedule grid = Schedule::range(9, 78);
  labels = {"rla_with_replacement", "rla_without_replacement", "bayes_rla", "bayes"};
  return {
      build_table(AuditRule::bravo(0.75, risk), grid, jobs),
      build_table(AuditRule::traditional_rla_without_replacement(0.75, risk, 0.0, n), grid, jobs),
      build_table(AuditRule::bayesian_rla(risk, uniform_winning(n)), grid, jobs),
      build_table(AuditRule::bayesian(risk, uniform_tallies(n)), grid, jobs),
  };
}

// Figure 1 plots RLA minus standard for each error bound: pairs (0,1), (2,3), ...
std::string figure1_csv(const std::vector<LookupTable>& tables) {
  const auto gammas = Figure1{}.gammas;
  std::string out = "n";
  for (double g : gammas) out += "," + fmt(g);
  out += "\n";
  for (std::size_t r = 0; r < tables[0].rows.size(); ++r) {
    out += std::to_string(tables[0].rows[r].n);
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      const auto& a = tables[2 * i].rows[r];
      const auto& b = tables[2 * i + 1].rows[r];
      out += "," + std::to_string(a.k_plus.value_or(a.n + 1) - b.k_plus.value_or(b.n + 1));
    }
    out += "\n";
  }
  return out;
}

nlohmann::json comparison_json(const TableComparison& cmp) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : cmp.violations) {
    v.push_back({{"n", x.n}, {"pair", x.pair}, {"stricter", x.stricter}, {"lenient", x.lenient}});
  }
  return {{"labels", cmp.labels}, {"n", cmp.sizes},     {"k_plus", cmp.k_plus},
          {"deltas", cmp.deltas}, {"ordered", cmp.ordered}, {"violations", std::move(v)}};
}

void report_ordering(const TableComparison& cmp, std::ostream& err) {
  if (cmp.ordered) {
    err << "ordering: holds at every n\n";
    return;
  }
  err << "ordering: " << cmp.violations.size() << " violation(s)";
  for (std::size_t i = 0; i < cmp.violations.size() && i < 5; ++i) {
    const auto& v = cmp.violations[i];
    err << (i ? "; " : ": ") << cmp.labels[v.pair] << "<" << cmp.labels[v.pair + 1] << " at n=" << v.n << " ("
        << v.stricter << " vs " << v.lenient << ")";
  }
  err << (cmp.violations.size() > 5 ? "; ...\n" : "\n");
}

struct CompareCmd {
  std::string preset;
  std::vector<std::string> files;
  std::vector<std::string> labels;
  bool deltas = false;
  std::string format = "csv";
  unsigned jobs = 1;
};

int run_compare(const CompareCmd& c, std::ostream& out, std::ostream& err) {
  if (c.preset.empty() == c.files.empty()) throw UsageError("compare: give either --preset or --table files");
  std::vector<std::string> labels = c.labels;
  std::vector<LookupTable> tables;
  if (c.preset == "figure1") {
    tables = figure1_tables(c.jobs, labels);
    if (c.format == "json") {
      nlohmann::json pairs = nlohmann::json::array();
      for (std::size_t i = 0; i + 1 < tables.size(); i += 2) {
        pairs.push_back(comparison_json(compare_tables(std::span(tables).subspan(i, 2), {labels[i], labels[i + 1]})));
      }
      out << nlohmann::json{{"preset", "figure1"}, {"pairs", std::move(pairs)}}.dump(2) << "\n";
    } else {
      out << figure1_csv(tables);
    }
    return kExitOk;
  }
  if (c.preset == "figure2") {
    tables = figure2_tables(c.jobs, labels);
  } else if (!c.preset.empty()) {
    throw UsageError("--preset: expected figure1 or figure2");
  } else {
    if (!labels.empty() && labels.size() != c.files.size()) throw UsageError("--label: one per --table");
    for (const auto& f : c.files) {
      try {
        tables.push_back(parse_table_json(read_file(f, "--table")));
      } catch (const PreconditionError& e) {
        throw UsageError("--table " + f + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("--table " + f + ": " + e.what());
      }
    }
    if (labels.empty()) labels = c.files;
  }
  TableComparison cmp;
  try {
    cmp = compare_tables(tables, labels);
  } catch (const PreconditionError& e) {
    throw UsageError(std::string("compare: ") + e.what());
  }
  if (c.format == "json") {
    out << comparison_json(cmp).dump(2) << "\n";
  } else {
    out << (c.deltas ? comparison_delta_csv(cmp) : comparison_series_csv(cmp));
  }
  report_ordering(cmp, err);
  return kExitOk;
}

// --- session --------------------------------------------------------------

struct SessionCmd {
  RuleFlags rule;
  std::string id = "cli";
  std::string winner = "winner";
  std::string loser = "loser";
  std::string trail_out;
  std::string replay;
};

void print_round(std::ostream& out, const RoundRecord& r) {
  out << "n=" << r.n << " k=" << r.k << " verdict=" << to_string(r.verdict) << "\n";
}

int run_session(const SessionCmd& c, std::istream& in, std::ostream& out, std::ostream& err) {
  if (!c.replay.empty()) {
    const AuditSession s = import_trail(read_file(c.replay, "--replay"));
    for (const auto& r : s.rounds()) print_round(out, r);
    out << "status=" << to_string(s.status()) << "\n";
    return kExitOk;
  }
  if (c.rule.audit.empty()) throw UsageError("session: --audit is required unless --replay is given");
  const AuditRule rule = make_rule(c.rule);
  const Schedule schedule = make_schedule(c.rule, rule);
  if (!c.rule.ballots) throw UsageError("--N is required for session");
  AuditSession session = [&] {
    try {
      return AuditSession::create(c.id, {*c.rule.ballots, c.winner, c.loser}, rule, schedule, c.rule.jobs);
    } catch (const SessionError& e) {
      throw UsageError(std::string("session: ") + e.what());
    }
  }();

  out << "audit " << session.id() << ": " << schedule.size() << " rounds; enter the cumulative count for "
      << c.winner << " (or \"n k\"; q to stop)\n";
  while (const auto next = session.next_round_size()) {
    const auto& row = session.table().rows[session.rounds().size()];
    out << "round " << session.rounds().size() + 1 << ": draw to n=" << *next
        << " (confirm at k>=" << (row.k_plus ? std::to_string(*row.k_plus) : "-")
        << ", hand count at k<=" << (row.k_minus ? std::to_string(*row.k_minus) : "-") << ")\n> " << std::flush;
    std::string line;
    if (!std::getline(in, line)) break;
    std::istringstream ls(line);
    std::vector<std::int64_t> nums;
    for (std::string tok; ls >> tok;) {
      if (tok == "q" || tok == "quit") goto done;
      try {
        std::size_t used = 0;
        nums.push_back(std::stoll(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        nums.clear();
        break;
      }
    }
    if (nums.empty() || nums.size() > 2) {
      err << "expected a count k, or \"n k\"\n";
      continue;
    }
    const std::int64_t n = nums.size() == 2 ? nums[0] : *next;
    const std::int64_t k = nums.back();
    try {
      session.record_round(n, k);
      print_round(out, session.rounds().back());
    } catch (const SessionError& e) {
      err << to_string(e.code()) << ": " << e.what() << "\n";
    }
  }
done:
  out << "status=" << to_string(session.status()) << "\n";
  if (!c.trail_out.empty()) {
    write_file(c.trail_out, export_trail(session) + "\n");
    err << "trail written to " << c.trail_out << "\n";
  }
  return kExitOk;
}

// --- reproduce ------------------------------------------------------------

struct ReproduceCmd {
  std::vector<std::string> only;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::int64_t trials = 10000;
  unsigned jobs = 1;
};

constexpr double kTable1Gammas[] = {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};

std::string size_header(const Schedule& s) {
  std::string h;
  for (auto n : s.sizes()) h += "," + std::to_string(n);
  return h;
}

std::string kplus_cells(const LookupTable& t) {
  std::string out;
  for (const auto& r : t.rows) out += "," + (r.k_plus ? std::to_string(*r.k_plus) : std::string());
  return out;
}

std::string reproduce_table1(const ReproduceCmd& c) {
  const Prior beta = beta_shape(kReferenceBallots, 0.5, 0.5);
  const Schedule s = Schedule::doubling_default();
  const std::int64_t tie = hardest_losing_tally(kReferenceBallots);
  std::string out = "gamma,max_risk,max_risk_absorbing";
  if (c.seed) out += ",max_risk_mc,max_risk_mc_se";
  out += size_header(s) + "\n";
  for (double g : kTable1Gammas) {
    const LookupTable t = build_table(AuditRule::bayesian(g, beta), s, c.jobs);
    out += fmt(g) + "," + fmt(exact_risk_dp(t, kReferenceBallots, tie, PathRule::kConfirmOnly)) + "," +
           fmt(exact_risk_dp(t, kReferenceBallots, tie, PathRule::kAbsorbHandCount));
    if (c.seed) {
      const Estimate e = simulate_risk(t, kReferenceBallots, tie, c.trials, *c.seed, c.jobs, PathRule::kConfirmOnly);
      out += "," + fmt(e.value) + "," + fmt(e.std_error);
    }
    out += kplus_cells(t) + "\n";
  }
  return out;
}

std::string reproduce_table3(const ReproduceCmd& c) {
  std::vector<std::string> labels;
  const auto tables = figure1_tables(c.jobs, labels);
  const auto gammas = Figure1{}.gammas;
  std::string out = "gamma,type" + size_header(Schedule::doubling_default()) + "\n";
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    out += fmt(gammas[i]) + ",standard" + kplus_cells(tables[2 * i + 1]) + "\n";
    out += fmt(gammas[i]) + ",rla" + kplus_cells(tables[2 * i]) + "\n";
  }
  return out;
}

int run_reproduce(const ReproduceCmd& c, std::ostream& out, std::ostream& err) {
  std::vector<std::string> what = c.only;
  if (what.empty()) what = {"table1", "table3", "figure1", "figure2"};
  for (const auto& w : what) {
    std::string text;
    std::vector<std::string> labels;
    if (w == "table1") {
      text = reproduce_table1(c);
    } else if (w == "table3") {
      text = reproduce_table3(c);
    } else if (w == "figure1") {
      text = figure1_csv(figure1_tables(c.jobs, labels));
    } else if (w == "figure2") {
      const auto cmp = compare_tables(figure2_tables(c.jobs, labels), labels);
      text = comparison_series_csv(cmp);
      report_ordering(cmp, err);
    } else {
      throw UsageError("--only: expected table1, table3, figure1 or figure2");
    }
    if (c.out_dir.empty()) {
      out << "# " << w << "\n" << text << "\n";
    } else {
      std::filesystem::create_directories(c.out_dir);
      const auto path = std::filesystem::path(c.out_dir) / (w + ".csv");
      write_file(path, text);
      err << "wrote " << path.string() << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-candidate ballot-polling audit engine", "pollaudit"};
  app.set_config("--config", "", "TOML/INI file supplying flag values");
  app.require_subcommand(1);

  TableCmd table;
  auto* table_cmd = app.add_subcommand("table", "Build and emit a lookup table");
  add_rule_flags(table_cmd, table.rule);
  table_cmd->add_option("--format", table.format)->check(CLI::IsMember({"csv", "json"}));

  RiskCmd risk;
  auto* risk_cmd = app.add_subcommand("risk", "Exact stop probabilities and risk scans");
  add_rule_flags(risk_cmd, risk.rule);
  risk_cmd->add_option("--format", risk.format)->check(CLI::IsMember({"csv", "json"}));
  risk_cmd->add_option("--x", risk.xs, "True winner tallies to evaluate")->delimiter(',');
  risk_cmd->add_flag("--scan-losing", risk.scan_losing, "Scan every losing tally for the maximum risk");
  risk_cmd->add_flag("--errors", risk.errors, "Prior-weighted miss and unnecessary hand count rates");
  risk_cmd->add_option("--method", risk.method)->check(CLI::IsMember({"exact", "enum"}));
  risk_cmd->add_option("--path-rule", risk.path_rule)->check(CLI::IsMember({"absorbing", "confirm-only"}));
  risk_cmd->add_option("--exact-cap", risk.exact_cap, "Largest N for exact scans")->check(CLI::PositiveNumber);

  SimulateCmd sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo risk at the tie (and other losing tallies)");
  add_rule_flags(sim_cmd, sim.rule);
  sim_cmd->add_option("--format", sim.format)->check(CLI::IsMember({"csv", "json"}));
  sim_cmd->add_option("--x", sim.x, "True winner tally (default floor(N/2))");
  sim_cmd->add_option("--extra-x", sim.extra, "Further losing tallies to scan")->delimiter(',');
  sim_cmd->add_option("--trials", sim.trials)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed, "Master seed (required)");
  sim_cmd->add_option("--path-rule", sim.path_rule)->check(CLI::IsMember({"absorbing", "confirm-only"}));

  CompareCmd cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare k_plus across audits");
  cmp_cmd->add_option("--preset", cmp.preset, "figure1 | figure2");
  cmp_cmd->add_option("--table", cmp.files, "Table JSON files, strictest first");
  cmp_cmd->add_option("--label", cmp.labels, "Series labels, one per --table");
  cmp_cmd->add_flag("--deltas", cmp.deltas, "Emit adjacent differences instead of series");
  cmp_cmd->add_option("--format", cmp.format)->check(CLI::IsMember({"csv", "json"}));
  cmp_cmd->add_option("--jobs", cmp.jobs)->check(CLI::Range(1u, 1024u));

  SessionCmd sess;
  auto* sess_cmd = app.add_subcommand("session", "Run an audit interactively, one round per line");
  add_rule_flags(sess_cmd, sess.rule);
  sess_cmd->get_option("--audit")->required(false);
  sess_cmd->add_option("--id", sess.id);
  sess_cmd->add_option("--winner", sess.winner);
  sess_cmd->add_option("--loser", sess.loser);
  sess_cmd->add_option("--trail", sess.trail_out, "Write the audit trail here on exit");
  sess_cmd->add_option("--replay", sess.replay, "Verify and replay a saved trail");

  ReproduceCmd rep;
  auto* rep_cmd = app.add_subcommand("reproduce", "Regenerate the published tables and figure data");
  rep_cmd->add_option("--only", rep.only, "table1 | table3 | figure1 | figure2")->delimiter(',');
  rep_cmd->add_option("--out-dir", rep.out_dir, "Write <name>.csv files here instead of stdout");
  rep_cmd->add_option("--seed", rep.seed, "Also estimate Table 1 risk by simulation");
  rep_cmd->add_option("--trials", rep.trials)->check(CLI::PositiveNumber);
  rep_cmd->add_option("--jobs", rep.jobs)->check(CLI::Range(1u, 1024u));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (table_cmd->parsed()) return run_table(table, out);
    if (risk_cmd->parsed()) return run_risk(risk, out, err);
    if (sim_cmd->parsed()) return run_simulate(sim, out, err);
    if (cmp_cmd->parsed()) return run_compare(cmp, out, err);
    if (sess_cmd->parsed()) return run_session(sess, in, out, err);
    if (rep_cmd->parsed()) return run_reproduce(rep, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitComputation;
  }
  return kExitUsage;
}

}  // namespace pollaudit::cli
