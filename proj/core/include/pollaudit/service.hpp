#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pollaudit/session.hpp"

namespace pollaudit::service {

inline constexpr std::string_view kApiVersion = "v1";

struct StoredSession {
  AuditSession session;
  std::string created_at;
  std::uint64_t revision = 0;  // bumped on every mutation
  std::mutex mutex;

  explicit StoredSession(AuditSession s, std::string created)
      : session(std::move(s)), created_at(std::move(created)) {}
};

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

// Sessions in memory, mirrored to an append-only JSON-lines log when a data
// directory is configured. Opening a store replays its log.
class SessionStore {
 public:
  explicit SessionStore(std::optional<std::filesystem::path> data_dir = std::nullopt);

  // Throws ServiceError(409) if the id is taken.
  nlohmann::json create(AuditSession session);
  nlohmann::json get(const std::string& id) const;
  // Applies one round if `revision` is current. Returns {verdict, session}.
  nlohmann::json record_round(const std::string& id, std::int64_t n, std::int64_t k,
                              std::uint64_t revision);
  std::string trail(const std::string& id) const;
  std::size_t size() const;

  std::optional<std::filesystem::path> log_path() const;

 private:
  std::shared_ptr<StoredSession> find(const std::string& id) const;
  void append(const nlohmann::json& record);
  void replay(const std::filesystem::path& path);
  static nlohmann::json view(const StoredSession& s);

  mutable std::shared_mutex index_mutex_;
  std::map<std::string, std::shared_ptr<StoredSession>> sessions_;
  std::mutex log_mutex_;
  std::optional<std::filesystem::path> log_path_;
  std::ofstream log_;
};

struct Response {
  int status = 200;
  nlohmann::json body;
  // Some endpoints return a pre-serialized document (the trail).
  std::optional<std::string> raw;

  std::string text() const { return raw ? *raw : body.dump(); }
};

struct ApiOptions {
  unsigned table_jobs = 1;
  // Largest N accepted for table computation requests.
  std::int64_t max_ballots = 10'000'000;
};

// Transport-independent request router for the /v1 API.
class ApiHandler {
 public:
  explicit ApiHandler(SessionStore& store, ApiOptions options = {});
  Response handle(const std::string& method, const std::string& path, const std::string& body);

 private:
  Response post_tables(const nlohmann::json& body);
  Response post_sessions(const nlohmann::json& body);
  Response post_rounds(const std::string& id, const nlohmann::json& body);
  std::string new_session_id();

  SessionStore& store_;
  ApiOptions options_;
};

nlohmann::json error_body(const std::string& code, const std::string& message);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string allowed_origin = "*";
  unsigned threads = 4;
};

// Blocking HTTP/1.1 front end for ApiHandler with CORS.
class HttpServer {
 public:
  HttpServer(ApiHandler& handler, ServerOptions options);
  ~HttpServer();
  // Binds; returns the bound port (useful with port 0). Throws on failure.
  int bind();
  // Serves until stop(); call bind() first.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pollaudit::service
