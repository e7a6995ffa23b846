#pragma once

#include <stdexcept>
#include <string>

namespace pollaudit {

// Raised when an argument violates an operation's documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The observed sample has zero probability under every tally the rule
// considers, so the decision statistic is 0/0.
class ImpossibleSample : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {
inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}
}  // namespace detail

}  // namespace pollaudit
