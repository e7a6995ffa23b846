#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace pollaudit::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Result r;
  r.code = run(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pollaudit-cli-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

TEST(Cli, TableMatchesPublishedRow) {
  const Result r = run_cli({"table", "--audit", "bayes", "--gamma", "0.001", "--N", "100000", "--prior",
                            "beta:0.5,0.5", "--schedule", "200x2..51200", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], "n,k_plus,k_minus");
  const std::int64_t want[] = {122, 231, 444, 862, 1686, 3320, 6564, 13014, 25845};
  for (std::size_t i = 0; i < 9; ++i) {
    const auto& row = rows[i + 1];
    const auto a = row.find(',');
    const auto b = row.find(',', a + 1);
    EXPECT_EQ(std::stoll(row.substr(a + 1, b - a - 1)), want[i]) << row;
  }
}

TEST(Cli, SimulateLandsNearPublishedRisk) {
  const std::vector<std::string> args = {"simulate", "--audit", "bayes", "--gamma",  "0.1",    "--N", "100000",
                                         "--x",      "50000",   "--trials", "10000", "--seed", "7"};
  const Result r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "x,risk,std_error");
  const double est = std::stod(rows[1].substr(rows[1].find(',') + 1));
  EXPECT_GE(est, 0.396);
  EXPECT_LE(est, 0.436);
  EXPECT_NE(r.err.find("estimate="), std::string::npos);
  // Byte-identical reruns, with and without extra workers.
  EXPECT_EQ(run_cli(args).out, r.out);
  auto threaded = args;
  threaded.insert(threaded.end(), {"--jobs", "3"});
  EXPECT_EQ(run_cli(threaded).out, r.out);
}

TEST(Cli, RiskScanStaysBelowLimit) {
  const Result r = run_cli({"risk", "--audit", "bayes-rla", "--alpha", "0.05", "--N", "101", "--schedule",
                            "10,20,40,80", "--scan-losing"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 52u);
  EXPECT_EQ(rows[0], "x,risk");
  double worst = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) worst = std::max(worst, std::stod(rows[i].substr(rows[i].find(',') + 1)));
  EXPECT_LT(worst, 0.05);
  EXPECT_NEAR(worst, 0.011411477927421358, 1e-12);
  EXPECT_NE(r.err.find("at x=50"), std::string::npos) << r.err;
}

TEST(Cli, RiskAtTalliesAndErrors) {
  const Result r = run_cli({"risk", "--audit", "bayes-rla", "--alpha", "0.05", "--N", "101", "--schedule",
                            "10,20,40,80", "--x", "50,60", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["tallies"].size(), 2u);
  EXPECT_FALSE(j["tallies"][0]["winning"].get<bool>());
  const double total = j["tallies"][1]["confirm"].get<double>() + j["tallies"][1]["hand_count"].get<double>() +
                       j["tallies"][1]["unresolved"].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-12);

  const Result e = run_cli({"risk", "--audit", "bayes", "--gamma", "0.05", "--N", "201", "--prior", "uniform",
                            "--schedule", "20,40,80,160", "--errors"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto rows = lines(e.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "miss,unnecessary_hand_count,decisive_hand_count,unresolved_given_winner");
  EXPECT_NEAR(std::stod(rows[1]), 0.008218752734162298, 1e-9);
}

TEST(Cli, EnumerationAgreesWithDp) {
  const std::vector<std::string> base = {"risk", "--audit", "bayes", "--gamma", "0.1", "--N", "12",
                                         "--prior", "uniform", "--schedule", "4,8", "--x", "6"};
  auto with_enum = base;
  with_enum.insert(with_enum.end(), {"--method", "enum"});
  const Result a = run_cli(base);
  const Result b = run_cli(with_enum);
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, UsageErrorsExitTwoAndNameTheFlag) {
  Result r = run_cli({"simulate", "--audit", "bayes", "--gamma", "0.1", "--N", "1000"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);

  r = run_cli({"table", "--audit", "bayes", "--gamma", "0.7", "--N", "100"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--audit bayes"), std::string::npos);

  r = run_cli({"table", "--audit", "bayes", "--gamma", "0.1", "--N", "100", "--schedule", "50,200"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--schedule"), std::string::npos);

  r = run_cli({"table", "--audit", "bravo", "--p", "0.7", "--alpha", "0.1", "--beta", "0.1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--beta"), std::string::npos);

  r = run_cli({"table", "--audit", "bayes", "--gamma", "0.1", "--N", "100", "--prior", "beta:1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--prior"), std::string::npos);

  r = run_cli({"risk", "--audit", "bayes", "--gamma", "0.1", "--N", "100", "--schedule", "10,20,40", "--x", "101"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--x"), std::string::npos);

  r = run_cli({"risk", "--audit", "bayes", "--gamma", "0.1", "--N", "5000", "--schedule", "100,200", "--scan-losing"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--exact-cap"), std::string::npos);

  EXPECT_EQ(run_cli({"table", "--audit", "bayes", "--gamma", "x"}).code, 2);
  EXPECT_EQ(run_cli({"table", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"table", "--audit", "nope", "--alpha", "0.1"}).code, 2);
  EXPECT_EQ(run_cli({"compare"}).code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run_cli({"--help"}).code, 0); }

TEST(Cli, ComputationErrorsExitOne) {
  const fs::path trail = scratch("bad-trail.json");
  std::ofstream(trail) << R"({"schema": "pollaudit.trail/1", "content_hash": "sha256:00"})";
  const Result r = run_cli({"session", "--replay", trail.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, ConfigFileSuppliesFlags) {
  const fs::path cfg = scratch("table.toml");
  std::ofstream(cfg) << "[table]\naudit = \"bayes\"\ngamma = 0.1\nN = 100000\nschedule = \"200\"\n";
  const Result r = run_cli({"--config", cfg.string(), "table"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).at(1).rfind("200,110,", 0), 0u) << r.out;
}

TEST(Cli, InteractiveSessionWritesReplayableTrail) {
  const fs::path trail = scratch("session-trail.json");
  const Result r = run_cli({"session", "--audit", "bayes-rla", "--alpha", "0.05", "--N", "101", "--schedule",
                            "10,20,40,80", "--id", "demo", "--trail", trail.string()},
                           "5\nabc\n20 3\n20 12\nq\n");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=10 k=5 verdict=continue"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n=20 k=12 verdict=continue"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("status=active"), std::string::npos);
  EXPECT_NE(r.err.find("expected a count"), std::string::npos);
  EXPECT_NE(r.err.find("count_regression"), std::string::npos) << r.err;

  const Result replay = run_cli({"session", "--replay", trail.string()});
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(replay.out, "n=10 k=5 verdict=continue\nn=20 k=12 verdict=continue\nstatus=active\n");
}

TEST(Cli, SessionStopsOnVerdict) {
  const Result r = run_cli({"session", "--audit", "bayes-rla", "--alpha", "0.05", "--N", "101", "--schedule",
                            "10,20,40,80"},
                           "9\n");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("verdict=confirmed_winner"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("status=confirmed_winner"), std::string::npos);
}

TEST(Cli, CompareTablesFromFiles) {
  const fs::path a = scratch("strict.json");
  const fs::path b = scratch("lenient.json");
  ASSERT_EQ(run_cli({"table", "--audit", "bayes-rla", "--alpha", "0.01", "--N", "200", "--schedule", "10..60",
                     "--format", "json"})
                .code,
            0);
  std::ofstream(a) << run_cli({"table", "--audit", "bayes-rla", "--alpha", "0.01", "--N", "200", "--schedule",
                               "10..60", "--format", "json"})
                          .out;
  std::ofstream(b) << run_cli({"table", "--audit", "bayes", "--gamma", "0.01", "--N", "200", "--prior", "uniform",
                               "--schedule", "10..60", "--format", "json"})
                          .out;
  const Result r = run_cli({"compare", "--table", a.string(), "--table", b.string(), "--label", "rla", "--label",
                            "bayes", "--deltas"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).at(0), "n,rla-bayes");
  EXPECT_EQ(lines(r.out).size(), 52u);
  EXPECT_NE(r.err.find("ordering: holds"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"compare", "--table", a.string(), "--label", "x", "--label", "y"}).code, 2);
}

TEST(Cli, Figure2PresetReportsOrdering) {
  const Result r = run_cli({"compare", "--preset", "figure2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  EXPECT_EQ(rows.at(0), "n,rla_with_replacement,rla_without_replacement,bayes_rla,bayes");
  EXPECT_EQ(rows.size(), 71u);
  EXPECT_NE(r.err.find("ordering:"), std::string::npos);
}

TEST(Cli, ReproduceWritesFiles) {
  const fs::path dir = scratch("repro");
  fs::remove_all(dir);
  const Result r = run_cli({"reproduce", "--only", "table3,figure2", "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t3 = lines(slurp(dir / "table3.csv"));
  ASSERT_EQ(t3.size(), 7u);
  EXPECT_EQ(t3[0], "gamma,type,200,400,800,1600,3200,6400,12800,25600,51200");
  EXPECT_EQ(t3[1].rfind("0.1,standard,110,", 0), 0u) << t3[1];
  EXPECT_EQ(t3[2].rfind("0.1,rla,120,", 0), 0u) << t3[2];
  EXPECT_TRUE(fs::exists(dir / "figure2.csv"));
  EXPECT_EQ(run_cli({"reproduce", "--only", "table9"}).code, 2);
}

}  // namespace
}  // namespace pollaudit::cli
