#include "pollaudit/tables.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <thread>

#include "pollaudit/error.hpp"

namespace pollaudit {
namespace {

std::int64_t parse_int(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  detail::require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(),
                  "expected an integer, got '" + std::string(s) + "'");
  return v;
}

std::string cell(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : std::string();
}

nlohmann::json opt_json(const std::optional<std::int64_t>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::int64_t> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::int64_t>();
}

}  // namespace

Schedule::Schedule(std::vector<std::int64_t> sizes) : sizes_(std::move(sizes)) {
  detail::require(!sizes_.empty(), "schedule must not be empty");
  detail::require(sizes_.front() > 0, "schedule sizes must be positive");
  for (std::size_t i = 1; i < sizes_.size(); ++i) {
    detail::require(sizes_[i] > sizes_[i - 1], "schedule sizes must be strictly increasing");
  }
}

Schedule Schedule::geometric(std::int64_t start, std::int64_t factor, std::int64_t end) {
  detail::require(start > 0 && factor >= 2 && end >= start,
                  "geometric schedule needs start > 0, factor >= 2, end >= start");
  std::vector<std::int64_t> sizes;
  for (std::int64_t n = start; n <= end; n *= factor) sizes.push_back(n);
  return Schedule(std::move(sizes));
}

Schedule Schedule::range(std::int64_t first, std::int64_t last) {
  detail::require(first > 0 && last >= first, "range schedule needs 0 < first <= last");
  std::vector<std::int64_t> sizes;
  for (std::int64_t n = first; n <= last; ++n) sizes.push_back(n);
  return Schedule(std::move(sizes));
}

Schedule Schedule::doubling_default() { return geometric(200, 2, 51200); }

Schedule Schedule::parse(std::string_view text) {
  if (text == "default") return doubling_default();
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto head = text.substr(0, dots);
    const std::int64_t end = parse_int(text.substr(dots + 2));
    if (const auto x = head.find('x'); x != std::string_view::npos) {
      return geometric(parse_int(head.substr(0, x)), parse_int(head.substr(x + 1)), end);
    }
    return range(parse_int(head), end);
  }
  std::vector<std::int64_t> sizes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    sizes.push_back(parse_int(piece));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return Schedule(std::move(sizes));
}

LookupTable build_table(const AuditRule& rule, const Schedule& schedule, unsigned jobs) {
  if (const auto n = rule.ballots()) {
    detail::require(schedule.back() <= *n, "schedule exceeds the number of ballots");
  }
  std::vector<ThresholdPair> rows(schedule.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(schedule.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = thresholds(rule, schedule[i]);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < rows.size(); i += workers) rows[i] = thresholds(rule, schedule[i]);
      });
    }
  }
  return LookupTable{rule, schedule, std::move(rows)};
}

nlohmann::json table_to_json(const LookupTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"n", r.n}, {"k_plus", opt_json(r.k_plus)}, {"k_minus", opt_json(r.k_minus)}});
  }
  nlohmann::json j = {
      {"version", 1},
      {"rule", rule_to_json(table.rule)},
      {"schedule", std::vector<std::int64_t>(table.schedule.sizes().begin(), table.schedule.sizes().end())},
      {"rows", std::move(rows)},
  };
  if (const auto n = table.ballots()) j["N"] = *n;
  return j;
}

LookupTable table_from_json(const nlohmann::json& j) {
  detail::require(j.is_object(), "table JSON: expected an object");
  Schedule schedule(j.at("schedule").get<std::vector<std::int64_t>>());
  std::vector<ThresholdPair> rows;
  for (const auto& r : j.at("rows")) {
    rows.push_back({r.at("n").get<std::int64_t>(), opt_from_json(r.at("k_plus")),
                    opt_from_json(r.at("k_minus"))});
  }
  detail::require(rows.size() == schedule.size(), "table JSON: rows do not match schedule");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail::require(rows[i].n == schedule[i], "table JSON: row sizes do not match schedule");
    if (rows[i].k_plus && rows[i].k_minus) {
      detail::require(*rows[i].k_minus < *rows[i].k_plus, "table JSON: k_minus must be < k_plus");
    }
  }
  return LookupTable{rule_from_json(j.at("rule")), std::move(schedule), std::move(rows)};
}

std::string emit_table(const LookupTable& table, TableFormat format) {
  if (format == TableFormat::kJson) return table_to_json(table).dump(2) + "\n";
  std::string out = "n,k_plus,k_minus\n";
  for (const auto& r : table.rows) {
    out += std::to_string(r.n) + "," + cell(r.k_plus) + "," + cell(r.k_minus) + "\n";
  }
  return out;
}

std::vector<ThresholdPair> parse_table_csv(std::string_view csv) {
  std::vector<ThresholdPair> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)) && line == "n,k_plus,k_minus",
                  "table CSV: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    detail::require(c1 != std::string::npos && c2 != std::string::npos,
                    "table CSV: expected three columns");
    ThresholdPair r;
    r.n = parse_int(std::string_view(line).substr(0, c1));
    const auto kp = std::string_view(line).substr(c1 + 1, c2 - c1 - 1);
    const auto km = std::string_view(line).substr(c2 + 1);
    if (!kp.empty()) r.k_plus = parse_int(kp);
    if (!km.empty()) r.k_minus = parse_int(km);
    rows.push_back(r);
  }
  return rows;
}

LookupTable parse_table_json(std::string_view json) {
  return table_from_json(nlohmann::json::parse(json));
}

TableComparison compare_tables(std::span<const LookupTable> tables, std::vector<std::string> labels) {
  detail::require(!tables.empty(), "compare_tables: need at least one table");
  for (const auto& t : tables) {
    detail::require(t.schedule == tables.front().schedule, "compare_tables: schedule mismatch");
  }
  if (labels.empty()) {
    for (std::size_t i = 0; i < tables.size(); ++i) labels.push_back("table" + std::to_string(i));
  }
  detail::require(labels.size() == tables.size(), "compare_tables: one label per table");

  TableComparison cmp;
  cmp.labels = std::move(labels);
  const auto sizes = tables.front().schedule.sizes();
  cmp.sizes.assign(sizes.begin(), sizes.end());
  for (const auto& t : tables) {
    std::vector<std::int64_t> series;
    for (const auto& r : t.rows) series.push_back(r.k_plus.value_or(r.n + 1));
    cmp.k_plus.push_back(std::move(series));
  }
  for (std::size_t p = 0; p + 1 < tables.size(); ++p) {
    std::vector<std::int64_t> d;
    for (std::size_t r = 0; r < cmp.sizes.size(); ++r) {
      d.push_back(cmp.k_plus[p][r] - cmp.k_plus[p + 1][r]);
      if (d.back() < 0) {
        cmp.ordered = false;
        cmp.violations.push_back({cmp.sizes[r], p, cmp.k_plus[p][r], cmp.k_plus[p + 1][r]});
      }
    }
    cmp.deltas.push_back(std::move(d));
  }
  return cmp;
}

std::string comparison_series_csv(const TableComparison& cmp) {
  std::string out = "n";
  for (const auto& l : cmp.labels) out += "," + l;
  out += "\n";
  for (std::size_t r = 0; r < cmp.sizes.size(); ++r) {
    out += std::to_string(cmp.sizes[r]);
    for (const auto& s : cmp.k_plus) out += "," + std::to_string(s[r]);
    out += "\n";
  }
  return out;
}

std::string comparison_delta_csv(const TableComparison& cmp) {
  std::string out = "n";
  for (std::size_t p = 0; p < cmp.deltas.size(); ++p) {
    out += "," + cmp.labels[p] + "-" + cmp.labels[p + 1];
  }
  out += "\n";
  for (std::size_t r = 0; r < cmp.sizes.size(); ++r) {
    out += std::to_string(cmp.sizes[r]);
    for (const auto& d : cmp.deltas) out += "," + std::to_string(d[r]);
    out += "\n";
  }
  return out;
}

}  // namespace pollaudit
