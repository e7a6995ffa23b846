#include "pollaudit/hypergeom.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>

#include "pollaudit/error.hpp"

namespace pollaudit {
namespace {

// Chunks never move once published, so readers only need an acquire load of
// the published size.
class LogFactorialTable {
 public:
  static constexpr std::int64_t kChunkBits = 16;
  static constexpr std::int64_t kChunkSize = std::int64_t{1} << kChunkBits;
  static constexpr std::int64_t kMaxChunks = 4096;

  static LogFactorialTable& instance() {
    static LogFactorialTable table;
    return table;
  }

  long double get(std::int64_t n) {
    if (n >= size_.load(std::memory_order_acquire)) grow(n);
    return chunks_[static_cast<std::size_t>(n >> kChunkBits)][n & (kChunkSize - 1)];
  }

  void grow(std::int64_t n) {
    detail::require(n < kChunkSize * kMaxChunks, "log_factorial: argument too large");
    std::lock_guard lock(mutex_);
    std::int64_t size = size_.load(std::memory_order_relaxed);
    while (size <= n) {
      auto chunk = std::make_unique<long double[]>(kChunkSize);
      for (std::int64_t i = 0; i < kChunkSize; ++i) {
        const std::int64_t m = size + i;
        if (m > 1) {
          // Neumaier-compensated running sum of ln m.
          const long double term = std::log(static_cast<long double>(m));
          const long double t = sum_ + term;
          if (std::fabs(sum_) >= std::fabs(term)) {
            carry_ += (sum_ - t) + term;
          } else {
            carry_ += (term - t) + sum_;
          }
          sum_ = t;
        }
        chunk[i] = sum_ + carry_;
      }
      owned_[static_cast<std::size_t>(size >> kChunkBits)] = std::move(chunk);
      chunks_[static_cast<std::size_t>(size >> kChunkBits)] =
          owned_[static_cast<std::size_t>(size >> kChunkBits)].get();
      size += kChunkSize;
      size_.store(size, std::memory_order_release);
    }
  }

 private:
  LogFactorialTable() { grow(0); }

  std::mutex mutex_;
  std::atomic<std::int64_t> size_{0};
  long double sum_ = 0.0L;
  long double carry_ = 0.0L;
  std::array<const long double*, kMaxChunks> chunks_{};
  std::array<std::unique_ptr<long double[]>, kMaxChunks> owned_{};
};

long double lbinom(std::int64_t n, std::int64_t k) {
  auto& t = LogFactorialTable::instance();
  return t.get(n) - t.get(k) - t.get(n - k);
}

std::int64_t hg_mode(std::int64_t population, std::int64_t marked, std::int64_t sample,
                     const HgSupport& s) {
  const long double m = std::floor(static_cast<long double>(sample + 1) * (marked + 1) /
                                   static_cast<long double>(population + 2));
  return std::clamp(static_cast<std::int64_t>(m), s.lo, s.hi);
}

// pmf(j+1) / pmf(j)
double ratio_up(std::int64_t population, std::int64_t marked, std::int64_t sample,
                std::int64_t j) {
  return (static_cast<double>(marked - j) * static_cast<double>(sample - j)) /
         (static_cast<double>(j + 1) *
          static_cast<double>(population - marked - sample + j + 1));
}

// pmf(j-1) / pmf(j)
double ratio_down(std::int64_t population, std::int64_t marked, std::int64_t sample,
                  std::int64_t j) {
  return (static_cast<double>(j) * static_cast<double>(population - marked - sample + j)) /
         (static_cast<double>(marked - j + 1) * static_cast<double>(sample - j + 1));
}

void check_hg_args(std::int64_t population, std::int64_t marked, std::int64_t sample) {
  detail::require(population >= 0, "hypergeometric: population must be non-negative");
  detail::require(sample >= 0 && sample <= population,
                  "hypergeometric: sample size must lie in [0, N]");
  detail::require(marked >= 0 && marked <= population,
                  "hypergeometric: marked count must lie in [0, N]");
}

}  // namespace

long double log_factorial(std::int64_t n) {
  detail::require(n >= 0, "log_factorial: n must be non-negative");
  return LogFactorialTable::instance().get(n);
}

void reserve_log_factorials(std::int64_t n) {
  if (n >= 0) LogFactorialTable::instance().get(n);
}

LogValue log_binomial(std::int64_t n, std::int64_t k) {
  detail::require(n >= 0, "log_binomial: n must be non-negative");
  if (k < 0 || k > n) return LogValue::zero();
  return LogValue::from_log(static_cast<double>(lbinom(n, k)));
}

HgSupport hg_support(std::int64_t population, std::int64_t marked, std::int64_t sample) {
  check_hg_args(population, marked, sample);
  return {std::max<std::int64_t>(0, sample - (population - marked)),
          std::min(sample, marked)};
}

LogValue log_hg(std::int64_t k, std::int64_t population, std::int64_t marked,
                std::int64_t sample) {
  const HgSupport s = hg_support(population, marked, sample);
  if (!s.contains(k)) return LogValue::zero();
  const long double v = lbinom(marked, k) + lbinom(population - marked, sample - k) -
                        lbinom(population, sample);
  return LogValue::from_log(static_cast<double>(std::min(v, 0.0L)));
}

HgRow hg_row(std::int64_t population, std::int64_t marked, std::int64_t sample,
             double relative_cutoff) {
  const HgSupport s = hg_support(population, marked, sample);
  const std::int64_t mode = hg_mode(population, marked, sample, s);
  const double peak = log_hg(mode, population, marked, sample).linear();
  const double floor_value = relative_cutoff * peak;

  std::vector<double> upper{peak};
  double v = peak;
  for (std::int64_t j = mode; j < s.hi; ++j) {
    v *= ratio_up(population, marked, sample, j);
    if (v <= floor_value || v == 0.0) break;
    upper.push_back(v);
  }
  std::vector<double> lower;
  v = peak;
  for (std::int64_t j = mode; j > s.lo; --j) {
    v *= ratio_down(population, marked, sample, j);
    if (v <= floor_value || v == 0.0) break;
    lower.push_back(v);
  }

  HgRow row;
  row.first = mode - static_cast<std::int64_t>(lower.size());
  row.mass.reserve(lower.size() + upper.size());
  row.mass.assign(lower.rbegin(), lower.rend());
  row.mass.insert(row.mass.end(), upper.begin(), upper.end());
  return row;
}

std::int64_t sample_hg(std::int64_t population, std::int64_t marked, std::int64_t sample,
                       double uniform) {
  const HgSupport s = hg_support(population, marked, sample);
  if (s.lo == s.hi) return s.lo;
  const std::int64_t mode = hg_mode(population, marked, sample, s);
  const double peak = log_hg(mode, population, marked, sample).linear();

  double u = uniform - peak;
  if (u < 0.0) return mode;
  std::int64_t lo = mode;
  std::int64_t hi = mode;
  double p_lo = peak;
  double p_hi = peak;
  double next_lo = lo > s.lo ? p_lo * ratio_down(population, marked, sample, lo) : -1.0;
  double next_hi = hi < s.hi ? p_hi * ratio_up(population, marked, sample, hi) : -1.0;
  // A candidate of 0 has underflowed and -1 marks an exhausted tail; once
  // neither side can contribute, the leftover u is rounding residue.
  while (std::max(next_lo, next_hi) > 0.0) {
    if (next_hi >= next_lo) {
      ++hi;
      p_hi = next_hi;
      u -= p_hi;
      if (u < 0.0) return hi;
      next_hi = hi < s.hi ? p_hi * ratio_up(population, marked, sample, hi) : -1.0;
    } else {
      --lo;
      p_lo = next_lo;
      u -= p_lo;
      if (u < 0.0) return lo;
      next_lo = lo > s.lo ? p_lo * ratio_down(population, marked, sample, lo) : -1.0;
    }
  }
  return mode;
}

}  // namespace pollaudit
