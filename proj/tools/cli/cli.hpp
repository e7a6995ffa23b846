#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pollaudit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitComputation = 1;
inline constexpr int kExitUsage = 2;

// Runs one invocation. `args` excludes the program name. Data goes to `out`,
// diagnostics to `err`; `in` feeds the interactive session command.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace pollaudit::cli
