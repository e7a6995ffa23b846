#include <benchmark/benchmark.h>

#include "pollaudit/hypergeom.hpp"
#include "pollaudit/riskeval.hpp"
#include "pollaudit/tables.hpp"

namespace pollaudit {
namespace {

constexpr std::int64_t kBallots = 100000;

const Prior& reference_prior() {
  static const Prior p = beta_shape(kBallots, 0.5, 0.5);
  return p;
}

const LookupTable& reference_table() {
  static const LookupTable t = build_table(AuditRule::bayesian(0.1, reference_prior()), Schedule::doubling_default());
  return t;
}

void BM_LogHg(benchmark::State& state) {
  reserve_log_factorials(kBallots);
  std::int64_t k = 100;
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_hg(k, kBallots, 50000, 200));
    k = k == 150 ? 50 : k + 1;
  }
}
BENCHMARK(BM_LogHg);

void BM_HgRow(benchmark::State& state) {
  const auto n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(hg_row(kBallots, 50000, n));
}
BENCHMARK(BM_HgRow)->Arg(200)->Arg(3200)->Arg(51200);

void BM_Statistic(benchmark::State& state) {
  const AuditRule rule = AuditRule::bayesian(0.1, reference_prior());
  const auto n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(log_statistic(rule, n, n / 2 + n / 40));
}
BENCHMARK(BM_Statistic)->Arg(200)->Arg(51200)->Unit(benchmark::kMillisecond);

void BM_BuildTable(benchmark::State& state) {
  const AuditRule rule = AuditRule::bayesian(0.1, reference_prior());
  const auto jobs = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_table(rule, Schedule::doubling_default(), jobs));
}
BENCHMARK(BM_BuildTable)->Arg(1)->Unit(benchmark::kSecond)->Iterations(1);

void BM_ExactRisk(benchmark::State& state) {
  const LookupTable& t = reference_table();
  for (auto _ : state) benchmark::DoNotOptimize(exact_risk_dp(t, kBallots, kBallots / 2, PathRule::kConfirmOnly));
}
BENCHMARK(BM_ExactRisk)->Unit(benchmark::kMillisecond);

void BM_SimulateRisk(benchmark::State& state) {
  const LookupTable& t = reference_table();
  const auto trials = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_risk(t, kBallots, kBallots / 2, trials, 7, 1, PathRule::kConfirmOnly));
  }
  state.SetItemsProcessed(state.iterations() * trials);
}
BENCHMARK(BM_SimulateRisk)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace pollaudit
