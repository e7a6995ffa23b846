#include "pollaudit/log_value.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pollaudit/error.hpp"

namespace pollaudit {

LogValue LogValue::from_linear(double value) {
  detail::require(!(value < 0.0) && !std::isnan(value),
                  "LogValue::from_linear: value must be non-negative");
  return from_log(std::log(value));
}

double LogValue::linear() const { return std::exp(log_); }

LogValue operator*(LogValue a, LogValue b) {
  if ((a.is_zero() && b.is_infinite()) || (a.is_infinite() && b.is_zero())) {
    throw std::domain_error("LogValue: 0 * inf is undefined");
  }
  if (a.is_zero() || b.is_zero()) return LogValue::zero();
  return LogValue::from_log(a.log_ + b.log_);
}

LogValue operator/(LogValue a, LogValue b) {
  if ((a.is_zero() && b.is_zero()) || (a.is_infinite() && b.is_infinite())) {
    throw std::domain_error("LogValue: indeterminate quotient");
  }
  if (a.is_zero() || b.is_infinite()) return LogValue::zero();
  if (b.is_zero() || a.is_infinite()) return LogValue::infinity();
  return LogValue::from_log(a.log_ - b.log_);
}

LogValue operator+(LogValue a, LogValue b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (a.is_infinite() || b.is_infinite()) return LogValue::infinity();
  const double hi = std::max(a.log_, b.log_);
  const double lo = std::min(a.log_, b.log_);
  return LogValue::from_log(hi + std::log1p(std::exp(lo - hi)));
}

LogValue log_sum(std::span<const LogValue> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& v : values) hi = std::max(hi, v.log());
  if (hi == -std::numeric_limits<double>::infinity()) return LogValue::zero();
  if (hi == std::numeric_limits<double>::infinity()) return LogValue::infinity();
  double acc = 0.0;
  for (const auto& v : values) {
    if (!v.is_zero()) acc += std::exp(v.log() - hi);
  }
  return LogValue::from_log(hi + std::log(acc));
}

}  // namespace pollaudit
