#include "pollaudit/service.hpp"

#include <array>

#include <httplib.h>
#include <openssl/rand.h>

#include "pollaudit/error.hpp"

namespace pollaudit::service {
namespace {

ServiceError not_found(const std::string& id) {
  return ServiceError(404, "not_found", "no session '" + id + "'");
}

int status_for(SessionErrorCode code) {
  return code == SessionErrorCode::kInvalidConfig ? 400 : 422;
}

}  // namespace

nlohmann::json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// --- SessionStore ---------------------------------------------------------

SessionStore::SessionStore(std::optional<std::filesystem::path> data_dir) {
  if (!data_dir) return;
  std::filesystem::create_directories(*data_dir);
  log_path_ = *data_dir / "sessions.jsonl";
  if (std::filesystem::exists(*log_path_)) replay(*log_path_);
  log_.open(*log_path_, std::ios::app);
  if (!log_) throw std::runtime_error("cannot open session log " + log_path_->string());
}

std::optional<std::filesystem::path> SessionStore::log_path() const { return log_path_; }

void SessionStore::replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error&) {
      // A torn final line is what a crash mid-append leaves behind.
      if (i + 1 == lines.size()) break;
      throw std::runtime_error("session log " + path.string() + ": corrupt line " + std::to_string(i + 1));
    }
    const std::string id = rec.at("id").get<std::string>();
    const std::string type = rec.at("type").get<std::string>();
    if (type == "create") {
      const auto& e = rec.at("election");
      ElectionInfo election{e.at("N").get<std::int64_t>(), e.at("winner").get<std::string>(),
                            e.at("loser").get<std::string>()};
      auto stored = std::make_shared<StoredSession>(
          AuditSession::from_table(id, std::move(election), table_from_json(rec.at("table"))),
          rec.at("created_at").get<std::string>());
      sessions_[id] = std::move(stored);
    } else if (type == "round") {
      auto it = sessions_.find(id);
      if (it == sessions_.end()) {
        throw std::runtime_error("session log: round for unknown session '" + id + "'");
      }
      it->second->session.record_round(rec.at("n").get<std::int64_t>(), rec.at("k").get<std::int64_t>(),
                                       rec.at("timestamp").get<std::string>());
      it->second->revision = rec.at("revision").get<std::uint64_t>();
    } else {
      throw std::runtime_error("session log: unknown record type '" + type + "'");
    }
  }
}

void SessionStore::append(const nlohmann::json& record) {
  if (!log_path_) return;
  std::lock_guard lock(log_mutex_);
  log_ << record.dump() << '\n';
  log_.flush();
  if (!log_) throw std::runtime_error("write to session log failed");
}

std::shared_ptr<StoredSession> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(index_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw not_found(id);
  return it->second;
}

nlohmann::json SessionStore::view(const StoredSession& s) {
  nlohmann::json j = session_to_json(s.session);
  j["revision"] = s.revision;
  j["created_at"] = s.created_at;
  j["version"] = std::string(kApiVersion);
  return j;
}

nlohmann::json SessionStore::create(AuditSession session) {
  const std::string id = session.id();
  auto stored = std::make_shared<StoredSession>(std::move(session), utc_timestamp_now());
  std::unique_lock lock(index_mutex_);
  if (sessions_.contains(id)) {
    throw ServiceError(409, "session_exists", "session '" + id + "' already exists");
  }
  const auto& e = stored->session.election();
  append({{"type", "create"},
          {"id", id},
          {"created_at", stored->created_at},
          {"election", {{"N", e.ballots}, {"winner", e.winner}, {"loser", e.loser}}},
          {"table", table_to_json(stored->session.table())}});
  sessions_.emplace(id, stored);
  std::lock_guard slock(stored->mutex);
  return view(*stored);
}

nlohmann::json SessionStore::get(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return view(*s);
}

nlohmann::json SessionStore::record_round(const std::string& id, std::int64_t n, std::int64_t k,
                                          std::uint64_t revision) {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (revision != s->revision) {
    throw ServiceError(409, "revision_conflict",
                       "revision " + std::to_string(revision) + " is stale; current is " +
                           std::to_string(s->revision));
  }
  AuditSession next = s->session;
  const Decision verdict = next.record_round(n, k);
  append({{"type", "round"},
          {"id", id},
          {"n", n},
          {"k", k},
          {"timestamp", next.rounds().back().timestamp},
          {"revision", s->revision + 1}});
  s->session = std::move(next);
  ++s->revision;
  return {{"verdict", std::string(to_string(verdict))}, {"session", view(*s)}};
}

std::string SessionStore::trail(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return export_trail(s->session);
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(index_mutex_);
  return sessions_.size();
}

// --- ApiHandler -----------------------------------------------------------

ApiHandler::ApiHandler(SessionStore& store, ApiOptions options) : store_(store), options_(options) {}

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  const std::string p = path.substr(0, path.find('?'));
  while (i < p.size()) {
    const auto j = p.find('/', i);
    const auto end = j == std::string::npos ? p.size() : j;
    if (end > i) parts.push_back(p.substr(i, end - i));
    i = end + 1;
  }
  return parts;
}

Schedule schedule_from(const nlohmann::json& body) {
  if (!body.contains("schedule") || body["schedule"].is_null()) return Schedule::doubling_default();
  const auto& s = body["schedule"];
  if (s.is_string()) return Schedule::parse(s.get<std::string>());
  return Schedule(s.get<std::vector<std::int64_t>>());
}

std::int64_t rule_population(const AuditRule& rule) {
  if (const auto n = rule.ballots()) return *n;
  if (const Prior* p = rule.effective_prior()) return p->ballots();
  return 0;
}

const nlohmann::json& require_field(const nlohmann::json& body, const char* key) {
  if (!body.contains(key)) throw ServiceError(400, "validation", std::string("missing field '") + key + "'");
  return body[key];
}

}  // namespace

std::string ApiHandler::new_session_id() {
  std::array<unsigned char, 8> bytes{};
  if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id = "s-";
  for (auto b : bytes) {
    id += kHex[b >> 4];
    id += kHex[b & 0xf];
  }
  return id;
}

Response ApiHandler::post_tables(const nlohmann::json& body) {
  const AuditRule rule = rule_from_json(require_field(body, "rule"));
  const std::int64_t n = rule_population(rule);
  if (n > options_.max_ballots) {
    throw ServiceError(400, "validation", "N exceeds the server limit of " + std::to_string(options_.max_ballots));
  }
  const LookupTable table = build_table(rule, schedule_from(body), options_.table_jobs);
  return {200, table_to_json(table), std::nullopt};
}

Response ApiHandler::post_sessions(const nlohmann::json& body) {
  const auto& e = require_field(body, "election");
  ElectionInfo election;
  election.ballots = require_field(e, "N").get<std::int64_t>();
  election.winner = e.value("winner", election.winner);
  election.loser = e.value("loser", election.loser);
  if (election.ballots < 1 || election.ballots > options_.max_ballots) {
    throw ServiceError(400, "validation", "election N must lie in [1, " + std::to_string(options_.max_ballots) + "]");
  }
  const AuditRule rule = rule_from_json(require_field(body, "rule"));
  std::string id = body.contains("id") ? body["id"].get<std::string>() : new_session_id();
  AuditSession session =
      AuditSession::create(std::move(id), std::move(election), rule, schedule_from(body), options_.table_jobs);
  return {201, store_.create(std::move(session)), std::nullopt};
}

Response ApiHandler::post_rounds(const std::string& id, const nlohmann::json& body) {
  const auto n = require_field(body, "n").get<std::int64_t>();
  const auto k = require_field(body, "k").get<std::int64_t>();
  const auto revision = require_field(body, "revision").get<std::uint64_t>();
  return {200, store_.record_round(id, n, k, revision), std::nullopt};
}

Response ApiHandler::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto parts = split_path(path);
  const auto parse_body = [&]() {
    try {
      nlohmann::json j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
      if (!j.is_object()) throw ServiceError(400, "invalid_json", "request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ServiceError(400, "invalid_json", e.what());
    }
  };
  const auto method_not_allowed = [&] {
    return Response{405, error_body("method_not_allowed", method + " not allowed on " + path), std::nullopt};
  };

  try {
    if (parts.size() < 2 || parts[0] != kApiVersion) {
      throw ServiceError(404, "not_found", "no route for " + path);
    }
    if (method == "OPTIONS") return {204, nullptr, std::string()};

    if (parts.size() == 2 && parts[1] == "healthz") {
      if (method != "GET") return method_not_allowed();
      return {200, {{"status", "ok"}, {"version", std::string(kApiVersion)}, {"sessions", store_.size()}},
              std::nullopt};
    }
    if (parts.size() == 2 && parts[1] == "tables") {
      if (method != "POST") return method_not_allowed();
      return post_tables(parse_body());
    }
    if (parts[1] == "sessions") {
      if (parts.size() == 2) {
        if (method != "POST") return method_not_allowed();
        return post_sessions(parse_body());
      }
      const std::string& id = parts[2];
      if (parts.size() == 3) {
        if (method != "GET") return method_not_allowed();
        return {200, store_.get(id), std::nullopt};
      }
      if (parts.size() == 4 && parts[3] == "rounds") {
        if (method != "POST") return method_not_allowed();
        return post_rounds(id, parse_body());
      }
      if (parts.size() == 4 && parts[3] == "trail") {
        if (method != "GET") return method_not_allowed();
        return {200, nullptr, store_.trail(id)};
      }
    }
    throw ServiceError(404, "not_found", "no route for " + path);
  } catch (const ServiceError& e) {
    return {e.status(), error_body(e.code(), e.what()), std::nullopt};
  } catch (const SessionError& e) {
    return {status_for(e.code()), error_body(std::string(to_string(e.code())), e.what()), std::nullopt};
  } catch (const PreconditionError& e) {
    return {400, error_body("validation", e.what()), std::nullopt};
  } catch (const nlohmann::json::exception& e) {
    return {400, error_body("validation", e.what()), std::nullopt};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what()), std::nullopt};
  }
}

// --- HttpServer -----------------------------------------------------------

struct HttpServer::Impl {
  ApiHandler& handler;
  ServerOptions options;
  httplib::Server server;
  int port = -1;

  Impl(ApiHandler& h, ServerOptions o) : handler(h), options(std::move(o)) {}

  void serve(const httplib::Request& req, httplib::Response& res) {
    const Response r = handler.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", options.allowed_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    if (r.status != 204) res.set_content(r.text(), "application/json");
  }
};

HttpServer::HttpServer(ApiHandler& handler, ServerOptions options)
    : impl_(std::make_unique<Impl>(handler, std::move(options))) {
  auto& s = impl_->server;
  const unsigned threads = std::max(1u, impl_->options.threads);
  s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  const auto cb = [this](const httplib::Request& req, httplib::Response& res) { impl_->serve(req, res); };
  s.Get(R"(/.*)", cb);
  s.Post(R"(/.*)", cb);
  s.Options(R"(/.*)", cb);
  s.Put(R"(/.*)", cb);
  s.Delete(R"(/.*)", cb);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
  return impl_->port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace pollaudit::service
