#include "pollaudit/session.hpp"

#include <array>
#include <chrono>
#include <ctime>

#include <openssl/evp.h>

#include "pollaudit/error.hpp"

namespace pollaudit {

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kActive:
      return "active";
    case SessionStatus::kConfirmedWinner:
      return "confirmed_winner";
    case SessionStatus::kHandCount:
      return "hand_count";
    case SessionStatus::kExhausted:
      return "exhausted";
  }
  return "active";
}

SessionStatus session_status_from_string(std::string_view s) {
  for (auto v : {SessionStatus::kActive, SessionStatus::kConfirmedWinner, SessionStatus::kHandCount,
                 SessionStatus::kExhausted}) {
    if (to_string(v) == s) return v;
  }
  throw PreconditionError("unknown session status '" + std::string(s) + "'");
}

std::string_view to_string(SessionErrorCode c) {
  switch (c) {
    case SessionErrorCode::kOutOfOrder:
      return "out_of_order";
    case SessionErrorCode::kCountRegression:
      return "count_regression";
    case SessionErrorCode::kInvalidCount:
      return "invalid_count";
    case SessionErrorCode::kTerminal:
      return "session_terminal";
    case SessionErrorCode::kInvalidConfig:
      return "invalid_config";
    case SessionErrorCode::kTamperedTrail:
      return "tampered_trail";
  }
  return "invalid_config";
}

Decision table_verdict(const ThresholdPair& row, std::int64_t k) {
  if (row.k_plus && k >= *row.k_plus) return Decision::kStopWinnerConfirmed;
  if (row.k_minus && k <= *row.k_minus) return Decision::kStopHandCount;
  return Decision::kContinue;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

AuditSession::AuditSession(std::string id, ElectionInfo election, LookupTable table)
    : id_(std::move(id)), election_(std::move(election)), table_(std::move(table)) {}

namespace {

void validate_config(const std::string& id, const ElectionInfo& election, const AuditRule& rule,
                     const Schedule& schedule) {
  const auto fail = [](const std::string& m) { throw SessionError(SessionErrorCode::kInvalidConfig, m); };
  if (id.empty()) fail("session id must be non-empty");
  if (election.ballots < 1) fail("N must be positive");
  if (schedule.back() > election.ballots) {
    fail("schedule exceeds N (" + std::to_string(schedule.back()) + " > " +
         std::to_string(election.ballots) + ")");
  }
  if (const auto n = rule.ballots(); n && *n != election.ballots) {
    fail("rule population " + std::to_string(*n) + " differs from election N " +
         std::to_string(election.ballots));
  }
}

[[noreturn]] void tampered(const std::string& message) {
  throw SessionError(SessionErrorCode::kTamperedTrail, message);
}

}  // namespace

AuditSession AuditSession::create(std::string id, ElectionInfo election, const AuditRule& rule,
                                  const Schedule& schedule, unsigned jobs) {
  validate_config(id, election, rule, schedule);
  try {
    return AuditSession(std::move(id), std::move(election), build_table(rule, schedule, jobs));
  } catch (const PreconditionError& e) {
    throw SessionError(SessionErrorCode::kInvalidConfig, e.what());
  }
}

AuditSession AuditSession::from_table(std::string id, ElectionInfo election, LookupTable table) {
  validate_config(id, election, table.rule, table.schedule);
  if (table.rows.size() != table.schedule.size()) {
    throw SessionError(SessionErrorCode::kInvalidConfig, "table rows do not match its schedule");
  }
  return AuditSession(std::move(id), std::move(election), std::move(table));
}

std::optional<std::int64_t> AuditSession::next_round_size() const {
  if (terminal()) return std::nullopt;
  return table_.schedule[rounds_.size()];
}

Decision AuditSession::record_round(std::int64_t n, std::int64_t k,
                                    std::optional<std::string> timestamp) {
  if (terminal()) {
    throw SessionError(SessionErrorCode::kTerminal,
                       "session is " + std::string(to_string(status_)) + "; no further rounds");
  }
  const std::int64_t expected = *next_round_size();
  if (n != expected) {
    throw SessionError(SessionErrorCode::kOutOfOrder,
                       "round size " + std::to_string(n) + " is not the next scheduled size " +
                           std::to_string(expected));
  }
  if (k < 0 || k > n) {
    throw SessionError(SessionErrorCode::kInvalidCount,
                       "winner count " + std::to_string(k) + " outside [0, " + std::to_string(n) + "]");
  }
  const std::int64_t prev_n = rounds_.empty() ? 0 : rounds_.back().n;
  const std::int64_t prev_k = rounds_.empty() ? 0 : rounds_.back().k;
  if (k < prev_k) {
    throw SessionError(SessionErrorCode::kCountRegression,
                       "cumulative winner count fell from " + std::to_string(prev_k) + " to " +
                           std::to_string(k));
  }
  if (k - prev_k > n - prev_n) {
    throw SessionError(SessionErrorCode::kCountRegression,
                       "winner count grew by " + std::to_string(k - prev_k) + " but only " +
                           std::to_string(n - prev_n) + " ballots were drawn");
  }

  const Decision verdict = table_verdict(table_.rows[rounds_.size()], k);
  rounds_.push_back({n, k, timestamp ? std::move(*timestamp) : utc_timestamp_now(), verdict});
  switch (verdict) {
    case Decision::kStopWinnerConfirmed:
      status_ = SessionStatus::kConfirmedWinner;
      break;
    case Decision::kStopHandCount:
      status_ = SessionStatus::kHandCount;
      break;
    case Decision::kContinue:
      if (rounds_.size() == table_.schedule.size()) status_ = SessionStatus::kExhausted;
      break;
  }
  return verdict;
}

nlohmann::json session_to_json(const AuditSession& session) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : session.rounds()) {
    rounds.push_back({{"n", r.n}, {"k", r.k}, {"timestamp", r.timestamp},
                      {"verdict", std::string(to_string(r.verdict))}});
  }
  const auto next = session.next_round_size();
  return {
      {"id", session.id()},
      {"election",
       {{"N", session.election().ballots},
        {"winner", session.election().winner},
        {"loser", session.election().loser}}},
      {"table", table_to_json(session.table())},
      {"rounds", std::move(rounds)},
      {"status", std::string(to_string(session.status()))},
      {"next_n", next ? nlohmann::json(*next) : nlohmann::json(nullptr)},
  };
}

std::string export_trail(const AuditSession& session) {
  nlohmann::json doc = session_to_json(session);
  doc.erase("next_n");
  doc["schema"] = std::string(kTrailSchema);
  const std::string body = doc.dump();
  doc["content_hash"] = "sha256:" + sha256_hex(body);
  return doc.dump();
}

AuditSession import_trail(std::string_view trail) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(trail);
  } catch (const nlohmann::json::exception& e) {
    tampered(std::string("trail is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema", "") != kTrailSchema) tampered("unsupported trail schema");
  if (!doc.contains("content_hash") || !doc["content_hash"].is_string()) tampered("trail has no content hash");
  const std::string claimed = doc["content_hash"].get<std::string>();
  doc.erase("content_hash");
  if (claimed != "sha256:" + sha256_hex(doc.dump())) tampered("content hash mismatch");

  try {
    const auto& e = doc.at("election");
    ElectionInfo election{e.at("N").get<std::int64_t>(), e.at("winner").get<std::string>(),
                          e.at("loser").get<std::string>()};
    AuditSession session = AuditSession::from_table(doc.at("id").get<std::string>(), election,
                                                    table_from_json(doc.at("table")));
    for (const auto& r : doc.at("rounds")) {
      const Decision got = session.record_round(r.at("n").get<std::int64_t>(), r.at("k").get<std::int64_t>(),
                                                r.at("timestamp").get<std::string>());
      if (std::string(to_string(got)) != r.at("verdict").get<std::string>()) {
        tampered("replayed verdict differs at n=" + std::to_string(r.at("n").get<std::int64_t>()));
      }
    }
    if (std::string(to_string(session.status())) != doc.at("status").get<std::string>()) {
      tampered("replayed status differs");
    }
    return session;
  } catch (const nlohmann::json::exception& e) {
    tampered(std::string("malformed trail: ") + e.what());
  } catch (const PreconditionError& e) {
    tampered(std::string("malformed trail: ") + e.what());
  } catch (const SessionError& e) {
    if (e.code() == SessionErrorCode::kTamperedTrail) throw;
    tampered(std::string("trail does not replay: ") + e.what());
  }
}

}  // namespace pollaudit
