#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pollaudit/tables.hpp"

namespace pollaudit {

enum class SessionStatus { kActive, kConfirmedWinner, kHandCount, kExhausted };

std::string_view to_string(SessionStatus s);  // active | confirmed_winner | hand_count | exhausted
SessionStatus session_status_from_string(std::string_view s);

struct ElectionInfo {
  std::int64_t ballots = 0;
  std::string winner = "winner";
  std::string loser = "loser";

  friend bool operator==(const ElectionInfo&, const ElectionInfo&) = default;
};

struct RoundRecord {
  std::int64_t n = 0;  // cumulative ballots drawn
  std::int64_t k = 0;  // cumulative ballots for the announced winner
  std::string timestamp;  // ISO 8601, UTC
  Decision verdict = Decision::kContinue;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

enum class SessionErrorCode {
  kOutOfOrder,       // n is not the next scheduled round size
  kCountRegression,  // k decreased, or grew by more than the ballots drawn
  kInvalidCount,     // k outside [0, n]
  kTerminal,         // the session already reached a final status
  kInvalidConfig,
  kTamperedTrail,    // trail hash or replayed verdicts do not match
};

std::string_view to_string(SessionErrorCode c);

class SessionError : public std::runtime_error {
 public:
  SessionError(SessionErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  SessionErrorCode code() const { return code_; }

 private:
  SessionErrorCode code_;
};

// One live audit. The lookup table is computed once at creation and never
// rebuilt, so verdicts depend only on the frozen table and the counts.
// Not internally synchronized; callers serialize mutation.
class AuditSession {
 public:
  // Builds the table. Throws SessionError(kInvalidConfig) when the schedule
  // exceeds N or the rule's population differs from the election's.
  static AuditSession create(std::string id, ElectionInfo election, const AuditRule& rule,
                             const Schedule& schedule, unsigned jobs = 1);
  // Adopts a previously built table (log replay, trail import).
  static AuditSession from_table(std::string id, ElectionInfo election, LookupTable table);

  // Appends a round of cumulative counts and returns its verdict. The
  // timestamp defaults to the current UTC time.
  Decision record_round(std::int64_t n, std::int64_t k,
                        std::optional<std::string> timestamp = std::nullopt);

  const std::string& id() const { return id_; }
  const ElectionInfo& election() const { return election_; }
  const LookupTable& table() const { return table_; }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }
  SessionStatus status() const { return status_; }
  bool terminal() const { return status_ != SessionStatus::kActive; }
  // Round size expected next; empty once terminal.
  std::optional<std::int64_t> next_round_size() const;

 private:
  AuditSession(std::string id, ElectionInfo election, LookupTable table);

  std::string id_;
  ElectionInfo election_;
  LookupTable table_;
  std::vector<RoundRecord> rounds_;
  SessionStatus status_ = SessionStatus::kActive;
};

// Verdict of the table comparison k >= k_plus / k <= k_minus.
Decision table_verdict(const ThresholdPair& row, std::int64_t k);

std::string utc_timestamp_now();

// {id, election, table, rounds, status, next_n}
nlohmann::json session_to_json(const AuditSession& session);

inline constexpr std::string_view kTrailSchema = "pollaudit.trail/1";

// Canonical JSON (sorted keys, compact) with "content_hash":
// "sha256:<hex>" computed over the same document without that key.
std::string export_trail(const AuditSession& session);
// Verifies the hash, then replays every round through a fresh session and
// checks the recorded verdicts. Throws SessionError(kTamperedTrail).
AuditSession import_trail(std::string_view trail);

std::string sha256_hex(std::string_view data);

}  // namespace pollaudit
