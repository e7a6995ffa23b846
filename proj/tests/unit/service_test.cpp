#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "pollaudit/service.hpp"

namespace pollaudit::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const json kReferenceRule = json::parse(R"({"kind": "bayesian", "gamma": 0.1,
  "prior": {"N": 100000, "family": "beta", "params": {"a": 0.5, "b": 0.5}}})");

const json kSmallRule = json::parse(R"({"kind": "bayesian_rla", "alpha": 0.05,
  "prior": {"N": 101, "family": "uniform_winning"}})");

json small_session_body(const std::string& id) {
  return {{"id", id}, {"election", {{"N", 101}, {"winner", "A"}, {"loser", "B"}}}, {"rule", kSmallRule},
          {"schedule", {10, 20, 40, 80}}};
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("pollaudit-test-" + std::to_string(::getpid()) + "-" +
                                         std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline std::atomic<int> counter_{0};
  fs::path path_;
};

Response call(ApiHandler& api, const std::string& method, const std::string& path, const json& body = nullptr) {
  return api.handle(method, path, body.is_null() ? std::string() : body.dump());
}

TEST(Api, Healthz) {
  SessionStore store;
  ApiHandler api(store);
  const Response r = call(api, "GET", "/v1/healthz");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
  EXPECT_EQ(r.body["version"], "v1");
  EXPECT_EQ(r.body["sessions"], 0);
}

TEST(Api, TablesEndpointMatchesReferenceRow) {
  SessionStore store;
  ApiHandler api(store);
  const Response r = call(api, "POST", "/v1/tables", {{"rule", kReferenceRule}});
  ASSERT_EQ(r.status, 200) << r.text();
  EXPECT_EQ(r.body["rows"][0]["n"], 200);
  EXPECT_EQ(r.body["rows"][0]["k_plus"], 110);
  EXPECT_EQ(r.body["rows"].size(), 9u);
  EXPECT_EQ(r.body["schedule"].size(), 9u);
}

TEST(Api, TablesAcceptStringSchedule) {
  SessionStore store;
  ApiHandler api(store);
  const Response r = call(api, "POST", "/v1/tables", {{"rule", kSmallRule}, {"schedule", "10,20,40,80"}});
  ASSERT_EQ(r.status, 200) << r.text();
  EXPECT_EQ(r.body["rows"][1]["k_plus"], 16);
  EXPECT_EQ(r.body["rows"][1]["k_minus"], 4);
  EXPECT_TRUE(r.body["rows"][0]["k_minus"].is_null());
}

TEST(Api, TablesValidation) {
  SessionStore store;
  ApiHandler api(store, {1, 1000});
  EXPECT_EQ(call(api, "POST", "/v1/tables", json::object()).status, 400);
  EXPECT_EQ(api.handle("POST", "/v1/tables", "{not json").status, 400);
  EXPECT_EQ(api.handle("POST", "/v1/tables", "[1]").body["error"]["code"], "invalid_json");
  EXPECT_EQ(call(api, "POST", "/v1/tables", {{"rule", {{"kind", "nope"}}}}).status, 400);
  const Response big = call(api, "POST", "/v1/tables", {{"rule", kReferenceRule}});
  EXPECT_EQ(big.status, 400);
  EXPECT_EQ(big.body["error"]["code"], "validation");
  EXPECT_EQ(call(api, "POST", "/v1/tables", {{"rule", kSmallRule}, {"schedule", {10, 500}}}).status, 400);
}

TEST(Api, ReferenceSessionConfirmsAndRejectsOutOfOrder) {
  SessionStore store;
  ApiHandler api(store);
  json body = {{"id", "ref"}, {"election", {{"N", 100000}}}, {"rule", kReferenceRule}};
  const Response created = call(api, "POST", "/v1/sessions", body);
  ASSERT_EQ(created.status, 201) << created.text();
  EXPECT_EQ(created.body["status"], "active");
  EXPECT_EQ(created.body["revision"], 0);
  EXPECT_EQ(created.body["next_n"], 200);
  EXPECT_EQ(created.body["table"]["rows"][0]["k_plus"], 110);

  const Response early = call(api, "POST", "/v1/sessions/ref/rounds", {{"n", 400}, {"k", 300}, {"revision", 0}});
  EXPECT_EQ(early.status, 422);
  EXPECT_EQ(early.body["error"]["code"], "out_of_order");

  const Response r = call(api, "POST", "/v1/sessions/ref/rounds", {{"n", 200}, {"k", 110}, {"revision", 0}});
  ASSERT_EQ(r.status, 200) << r.text();
  EXPECT_EQ(r.body["verdict"], "confirmed_winner");
  EXPECT_EQ(r.body["session"]["status"], "confirmed_winner");
  EXPECT_EQ(r.body["session"]["revision"], 1);

  const Response after = call(api, "POST", "/v1/sessions/ref/rounds", {{"n", 400}, {"k", 300}, {"revision", 1}});
  EXPECT_EQ(after.status, 422);
  EXPECT_EQ(after.body["error"]["code"], "session_terminal");
}

TEST(Api, SessionLifecycleAndErrors) {
  SessionStore store;
  ApiHandler api(store);
  ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("s1")).status, 201);
  EXPECT_EQ(call(api, "POST", "/v1/sessions", small_session_body("s1")).status, 409);

  const Response got = call(api, "GET", "/v1/sessions/s1");
  EXPECT_EQ(got.status, 200);
  EXPECT_EQ(got.body["election"]["winner"], "A");
  EXPECT_EQ(got.body["version"], "v1");
  EXPECT_EQ(call(api, "GET", "/v1/sessions/nope").status, 404);
  EXPECT_EQ(call(api, "POST", "/v1/sessions/nope/rounds", {{"n", 10}, {"k", 5}, {"revision", 0}}).status, 404);

  EXPECT_EQ(call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 10}, {"k", 5}}).status, 400);
  EXPECT_EQ(call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 10}, {"k", 11}, {"revision", 0}}).status, 422);
  EXPECT_EQ(call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 10}, {"k", 5}, {"revision", 3}}).status, 409);
  const Response ok = call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 10}, {"k", 3}, {"revision", 0}});
  EXPECT_EQ(ok.body["verdict"], "continue");
  EXPECT_EQ(ok.body["session"]["next_n"], 20);
  const Response stale = call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 20}, {"k", 10}, {"revision", 0}});
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.body["error"]["code"], "revision_conflict");
  const Response regress = call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 20}, {"k", 2}, {"revision", 1}});
  EXPECT_EQ(regress.status, 422);
  EXPECT_EQ(regress.body["error"]["code"], "count_regression");
  EXPECT_EQ(call(api, "POST", "/v1/sessions/s1/rounds", {{"n", 20}, {"k", 4}, {"revision", 1}}).body["verdict"],
            "hand_count");

  const Response trail = call(api, "GET", "/v1/sessions/s1/trail");
  ASSERT_EQ(trail.status, 200);
  ASSERT_TRUE(trail.raw.has_value());
  const AuditSession replayed = import_trail(*trail.raw);
  EXPECT_EQ(replayed.status(), SessionStatus::kHandCount);
  EXPECT_EQ(replayed.rounds().size(), 2u);
}

TEST(Api, CreateValidation) {
  SessionStore store;
  ApiHandler api(store);
  json mismatch = small_session_body("m");
  mismatch["election"]["N"] = 100;
  const Response r = call(api, "POST", "/v1/sessions", mismatch);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["code"], "invalid_config");
  json no_election = small_session_body("m");
  no_election.erase("election");
  EXPECT_EQ(call(api, "POST", "/v1/sessions", no_election).status, 400);
  json zero = small_session_body("m");
  zero["election"]["N"] = 0;
  EXPECT_EQ(call(api, "POST", "/v1/sessions", zero).status, 400);
  EXPECT_EQ(store.size(), 0u);
}

TEST(Api, GeneratedIdsAreUnique) {
  SessionStore store;
  ApiHandler api(store);
  json body = small_session_body("x");
  body.erase("id");
  const std::string a = call(api, "POST", "/v1/sessions", body).body["id"];
  const std::string b = call(api, "POST", "/v1/sessions", body).body["id"];
  EXPECT_NE(a, b);
  EXPECT_EQ(a.rfind("s-", 0), 0u);
  EXPECT_EQ(a.size(), 18u);
}

TEST(Api, RoutingErrors) {
  SessionStore store;
  ApiHandler api(store);
  EXPECT_EQ(call(api, "GET", "/v2/healthz").status, 404);
  EXPECT_EQ(call(api, "GET", "/v1/nothing").status, 404);
  EXPECT_EQ(call(api, "POST", "/v1/healthz").status, 405);
  EXPECT_EQ(call(api, "GET", "/v1/tables").status, 405);
  EXPECT_EQ(call(api, "DELETE", "/v1/sessions/x").status, 405);
  const Response r = call(api, "PUT", "/v1/sessions");
  EXPECT_EQ(r.status, 405);
  EXPECT_EQ(r.body["error"]["code"], "method_not_allowed");
  EXPECT_EQ(call(api, "OPTIONS", "/v1/sessions").status, 204);
}

TEST(Api, ApiVerdictsMatchCore) {
  SessionStore store;
  ApiHandler api(store);
  ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("v")).status, 201);
  const AuditRule rule = rule_from_json(kSmallRule);
  std::uint64_t rev = 0;
  for (auto [n, k] : {std::pair{10, 6}, {20, 13}, {40, 27}}) {
    const Response r = call(api, "POST", "/v1/sessions/v/rounds", {{"n", n}, {"k", k}, {"revision", rev++}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["verdict"], std::string(to_string(decide(rule, n, k))));
    if (r.body["session"]["status"] != "active") break;
  }
}

TEST(Store, ConcurrentRoundPostsHaveOneWinner) {
  SessionStore store;
  ApiHandler api(store);
  ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("race")).status, 201);
  constexpr int kThreads = 16;
  std::atomic<int> ok{0}, conflicts{0};
  std::atomic<bool> go{false};
  std::vector<std::thread> threads;
  for (int i = 0; i < kThreads; ++i) {
    threads.emplace_back([&, i] {
      while (!go) std::this_thread::yield();
      const Response r =
          call(api, "POST", "/v1/sessions/race/rounds", {{"n", 10}, {"k", i % 6 + 2}, {"revision", 0}});
      if (r.status == 200) ++ok;
      if (r.status == 409) ++conflicts;
    });
  }
  go = true;
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok, 1);
  EXPECT_EQ(ok + conflicts, kThreads);
  const Response s = call(api, "GET", "/v1/sessions/race");
  EXPECT_EQ(s.body["revision"], 1);
  EXPECT_EQ(s.body["rounds"].size(), 1u);
}

TEST(Store, LogReplaysAfterRestart) {
  TempDir dir;
  std::string trail_before;
  {
    SessionStore store(dir.path());
    ApiHandler api(store);
    ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("p")).status, 201);
    ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("q")).status, 201);
    call(api, "POST", "/v1/sessions/p/rounds", {{"n", 10}, {"k", 5}, {"revision", 0}});
    call(api, "POST", "/v1/sessions/p/rounds", {{"n", 20}, {"k", 12}, {"revision", 1}});
    // Rejected writes must not reach the log.
    call(api, "POST", "/v1/sessions/p/rounds", {{"n", 40}, {"k", 2}, {"revision", 2}});
    trail_before = store.trail("p");
    ASSERT_TRUE(store.log_path().has_value());
  }
  SessionStore reopened(dir.path());
  EXPECT_EQ(reopened.size(), 2u);
  EXPECT_EQ(reopened.trail("p"), trail_before);
  const json p = reopened.get("p");
  EXPECT_EQ(p["revision"], 2);
  EXPECT_EQ(p["next_n"], 40);
  ApiHandler api(reopened);
  EXPECT_EQ(call(api, "POST", "/v1/sessions/p/rounds", {{"n", 40}, {"k", 25}, {"revision", 2}}).status, 200);
}

TEST(Store, TornFinalLineIsIgnored) {
  TempDir dir;
  {
    SessionStore store(dir.path());
    ApiHandler api(store);
    ASSERT_EQ(call(api, "POST", "/v1/sessions", small_session_body("t")).status, 201);
    call(api, "POST", "/v1/sessions/t/rounds", {{"n", 10}, {"k", 5}, {"revision", 0}});
  }
  const fs::path log = dir.path() / "sessions.jsonl";
  ASSERT_TRUE(fs::exists(log));
  {
    std::ofstream out(log, std::ios::app);
    out << R"({"type": "round", "id": "t", "n": 20, "k)";
  }
  SessionStore reopened(dir.path());
  EXPECT_EQ(reopened.get("t")["revision"], 1);
}

class LiveServer : public ::testing::Test {
 protected:
  void SetUp() override {
    api_ = std::make_unique<ApiHandler>(store_);
    server_ = std::make_unique<HttpServer>(*api_, ServerOptions{"127.0.0.1", 0, "http://localhost:5173", 2});
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->listen(); });
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  SessionStore store_;
  std::unique_ptr<ApiHandler> api_;
  std::unique_ptr<HttpServer> server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(LiveServer, ServesApiWithCors) {
  httplib::Client cli("127.0.0.1", port_);
  cli.set_read_timeout(30, 0);
  auto health = cli.Get("/v1/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_EQ(health->get_header_value("Content-Type"), "application/json");

  auto pre = cli.Options("/v1/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);

  auto created = cli.Post("/v1/sessions", small_session_body("live").dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  auto round = cli.Post("/v1/sessions/live/rounds", json{{"n", 10}, {"k", 5}, {"revision", 0}}.dump(),
                        "application/json");
  ASSERT_TRUE(round);
  EXPECT_EQ(json::parse(round->body)["verdict"], "continue");
  auto trail = cli.Get("/v1/sessions/live/trail");
  ASSERT_TRUE(trail);
  EXPECT_EQ(import_trail(trail->body).rounds().size(), 1u);
  auto missing = cli.Get("/v1/sessions/none");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "not_found");
}

}  // namespace
}  // namespace pollaudit::service
