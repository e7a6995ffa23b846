#pragma once

#include <cstdint>
#include <vector>

#include "pollaudit/log_value.hpp"

namespace pollaudit {

// ln(n!) from a process-wide table of compensated sums of ln i, held in
// extended precision. The table grows on demand; growth is serialized and
// readers never block.
long double log_factorial(std::int64_t n);

// Pre-extends the log-factorial table so later lookups up to n are lock-free.
void reserve_log_factorials(std::int64_t n);

// ln C(n, k); exact zero when k < 0 or k > n.
LogValue log_binomial(std::int64_t n, std::int64_t k);

// Closed support [lo, hi] of the number of marked items in a sample of n
// drawn without replacement from a population of N containing x marked.
struct HgSupport {
  std::int64_t lo = 0;
  std::int64_t hi = -1;
  bool contains(std::int64_t k) const { return k >= lo && k <= hi; }
};
HgSupport hg_support(std::int64_t population, std::int64_t marked, std::int64_t sample);

// ln hg(k; N, x, n) = ln[C(x,k) C(N-x,n-k) / C(N,n)], with N the population,
// x the marked (winner) ballots and n the sample size. Exact zero outside
// the support. Throws PreconditionError unless 0 <= n <= N and 0 <= x <= N.
LogValue log_hg(std::int64_t k, std::int64_t population, std::int64_t marked,
                std::int64_t sample);

// Probability masses hg(j; N, x, n) for j = first, first+1, ... computed by the
// ratio recurrence outward from the mode. Terms smaller than
// relative_cutoff * pmf(mode) are dropped from both tails; a cutoff of 0
// keeps every term that does not underflow.
struct HgRow {
  std::int64_t first = 0;
  std::vector<double> mass;
};
HgRow hg_row(std::int64_t population, std::int64_t marked, std::int64_t sample,
             double relative_cutoff = 0.0);

// Inversion sampler for the hypergeometric law. The support is walked outward
// from the mode, larger term first, so the CDF being inverted follows that
// order rather than k. `uniform` must lie in [0, 1).
std::int64_t sample_hg(std::int64_t population, std::int64_t marked, std::int64_t sample,
                       double uniform);

}  // namespace pollaudit
