#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pollaudit/rules.hpp"

namespace pollaudit {

// Cumulative sample sizes at which the audit renders a verdict.
class Schedule {
 public:
  // Throws PreconditionError unless sizes are positive and strictly increasing.
  explicit Schedule(std::vector<std::int64_t> sizes);

  // start, start*factor, ... up to and including `end` when reached.
  static Schedule geometric(std::int64_t start, std::int64_t factor, std::int64_t end);
  static Schedule range(std::int64_t first, std::int64_t last);
  // 200, 400, ..., 51200.
  static Schedule doubling_default();

  // Accepts "200x2..51200", "9..78", "10,20,40,80" or "default".
  static Schedule parse(std::string_view text);

  std::span<const std::int64_t> sizes() const { return sizes_; }
  std::size_t size() const { return sizes_.size(); }
  std::int64_t operator[](std::size_t i) const { return sizes_[i]; }
  std::int64_t back() const { return sizes_.back(); }

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  std::vector<std::int64_t> sizes_;
};

struct LookupTable {
  AuditRule rule;
  Schedule schedule;
  std::vector<ThresholdPair> rows;  // rows[i].n == schedule[i]

  std::optional<std::int64_t> ballots() const { return rule.ballots(); }
};

// rows[i] = thresholds(rule, schedule[i]); rounds are split across `jobs`
// worker threads with identical results for any job count.
LookupTable build_table(const AuditRule& rule, const Schedule& schedule, unsigned jobs = 1);

enum class TableFormat { kCsv, kJson };

nlohmann::json table_to_json(const LookupTable& table);
LookupTable table_from_json(const nlohmann::json& j);

// CSV carries only the rows: "n,k_plus,k_minus" with empty cells for absent
// thresholds. JSON carries the rule and schedule as well.
std::string emit_table(const LookupTable& table, TableFormat format);
std::vector<ThresholdPair> parse_table_csv(std::string_view csv);
LookupTable parse_table_json(std::string_view json);

struct OrderingViolation {
  std::int64_t n = 0;
  std::size_t pair = 0;  // tables[pair] vs tables[pair + 1]
  std::int64_t stricter = 0;
  std::int64_t lenient = 0;
};

struct TableComparison {
  std::vector<std::string> labels;
  std::vector<std::int64_t> sizes;
  // k_plus[t][r]; an absent threshold is recorded as n + 1 (never confirms).
  std::vector<std::vector<std::int64_t>> k_plus;
  // deltas[p][r] = k_plus[p][r] - k_plus[p + 1][r].
  std::vector<std::vector<std::int64_t>> deltas;
  // True iff every delta is >= 0, i.e. tables are listed strictest first.
  bool ordered = true;
  std::vector<OrderingViolation> violations;
};

// Throws PreconditionError when schedules differ or fewer than one table.
TableComparison compare_tables(std::span<const LookupTable> tables,
                               std::vector<std::string> labels = {});

// Plot data: "n,<label>..." and "n,<a>-<b>..." respectively.
std::string comparison_series_csv(const TableComparison& cmp);
std::string comparison_delta_csv(const TableComparison& cmp);

}  // namespace pollaudit
