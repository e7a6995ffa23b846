#pragma once

#include <compare>
#include <limits>
#include <span>

namespace pollaudit {

// A non-negative quantity stored as its natural logarithm. The default value
// is exact zero (log = -inf); +inf encodes an unbounded ratio.
class LogValue {
 public:
  constexpr LogValue() = default;

  static constexpr LogValue zero() { return LogValue(); }
  static constexpr LogValue one() { return from_log(0.0); }
  static constexpr LogValue infinity() {
    return from_log(std::numeric_limits<double>::infinity());
  }
  static constexpr LogValue from_log(double log_value) {
    LogValue v;
    v.log_ = log_value;
    return v;
  }
  // Throws PreconditionError for negative or NaN input.
  static LogValue from_linear(double value);

  constexpr double log() const { return log_; }
  double linear() const;

  constexpr bool is_zero() const {
    return log_ == -std::numeric_limits<double>::infinity();
  }
  constexpr bool is_infinite() const {
    return log_ == std::numeric_limits<double>::infinity();
  }

  // Product and quotient act on logs. 0 * inf and 0/0, inf/inf are
  // undefined and throw std::domain_error.
  friend LogValue operator*(LogValue a, LogValue b);
  friend LogValue operator/(LogValue a, LogValue b);
  // Sum via log-sum-exp against the larger operand.
  friend LogValue operator+(LogValue a, LogValue b);

  friend constexpr bool operator==(LogValue a, LogValue b) { return a.log_ == b.log_; }
  friend constexpr std::partial_ordering operator<=>(LogValue a, LogValue b) {
    return a.log_ <=> b.log_;
  }

 private:
  double log_ = -std::numeric_limits<double>::infinity();
};

// ln(sum exp(v_i)), computed relative to the maximum element. Empty input
// yields exact zero.
LogValue log_sum(std::span<const LogValue> values);

}  // namespace pollaudit
