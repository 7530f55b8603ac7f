#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "gmmnqmc/csv.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gmmnqmc;

namespace {

struct Result {
  int code;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory per test.
fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "gmmnqmc_cli_test" / (std::string(info->test_suite_name()) + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& cfg, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << cfg.dump(2);
  return p;
}

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + GMMNQMC_CLI_PATH + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

Result run_config(const std::string& command, const json& cfg, const fs::path& dir, const std::string& out = "out") {
  return cli(command + " --config \"" + write_config(dir, cfg).string() + "\" --out \"" + (dir / out).string() + "\"", dir);
}

const json kClayton = {{"family", "clayton"}, {"dim", 2}, {"theta", 2.0}};

json tiny_train() {
  return {{"n_trn", 200}, {"n_bat", 100}, {"n_epo", 3}, {"hidden", {12}}};
}

}  // namespace

TEST(Cli, UnknownSubcommandIsValidationError) {
  const auto dir = scratch();
  EXPECT_EQ(cli("frobnicate", dir).code, 2);
  EXPECT_EQ(cli("sample --preset huge", dir).code, 2);
}

TEST(Cli, MalformedJsonIsValidationError) {
  const auto dir = scratch();
  std::ofstream(dir / "bad.json") << "{\"seed\": 1,";
  const auto r = cli("sample --config \"" + (dir / "bad.json").string() + "\" --out \"" + (dir / "out").string() + "\"", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("invalid input"), std::string::npos);
}

TEST(Cli, UnknownKeysAreRejected) {
  const auto dir = scratch();
  EXPECT_EQ(run_config("sample", {{"copula", kClayton}, {"sampel", json::object()}}, dir).code, 2);
  json cop = kClayton;
  cop["thetta"] = 1.0;
  EXPECT_EQ(run_config("sample", {{"copula", cop}, {"sample", {{"mode", "copula_prs"}}}}, dir).code, 2);
  EXPECT_EQ(run_config("train", {{"copula", kClayton}, {"train", {{"n_epoch", 3}}}}, dir).code, 2);
}

TEST(Cli, InvalidParametersAreRejected) {
  const auto dir = scratch();
  const json bad_theta = {{"family", "clayton"}, {"dim", 2}, {"theta", -3.0}};
  EXPECT_EQ(run_config("sample", {{"copula", bad_theta}, {"sample", {{"mode", "copula_prs"}}}}, dir).code, 2);
  EXPECT_EQ(run_config("sample", {{"copula", kClayton}, {"sample", {{"mode", "copula_prs"}, {"n", 0}}}}, dir).code, 2);
  EXPECT_EQ(run_config("sample", {{"copula", kClayton}, {"sample", {{"mode", "magic"}}}}, dir).code, 2);
}

TEST(Cli, SampleWritesRequestedRows) {
  const auto dir = scratch();
  const auto r = run_config("sample", {{"copula", kClayton}, {"sample", {{"mode", "copula_qrs"}, {"n", 257}}}}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> header;
  const Matrix u = csv::read_matrix((dir / "out" / "sample.csv").string(), &header);
  EXPECT_EQ(u.rows(), 257);
  EXPECT_EQ(u.cols(), 2);
  EXPECT_EQ(header, (std::vector<std::string>{"u1", "u2"}));
  EXPECT_GT(u.minCoeff(), 0.0);
  EXPECT_LT(u.maxCoeff(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "out" / "provenance.json"));
}

TEST(Cli, PseudoObservationsAreRanks) {
  const auto dir = scratch();
  const auto r = run_config(
      "sample", {{"copula", kClayton}, {"sample", {{"mode", "copula_prs"}, {"n", 10}, {"pseudo_obs", true}}}}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const Matrix u = csv::read_matrix((dir / "out" / "sample.csv").string());
  std::set<long> ranks;
  for (Eigen::Index i = 0; i < u.rows(); ++i) ranks.insert(std::lround(u(i, 0) * 11.0));
  EXPECT_EQ(ranks, (std::set<long>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
}

TEST(Cli, NestedGumbelQuasiSamplingIsUnsupported) {
  const auto dir = scratch();
  const json nested = {{"family", "nested_gumbel"},
                       {"theta0", 1.5},
                       {"children", {{{"theta", 2.0}, {"indices", {0, 1}}}, {{"theta", 3.0}, {"indices", {2, 3}}}}}};
  const auto r = run_config("sample", {{"copula", nested}, {"sample", {{"mode", "copula_qrs"}, {"n", 64}}}}, dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("NA"), std::string::npos);
  // Pseudo-random sampling of the same copula works.
  EXPECT_EQ(run_config("sample", {{"copula", nested}, {"sample", {{"mode", "copula_prs"}, {"n", 64}}}}, dir).code, 0);
}

TEST(Cli, RawQuasiPointsAreRefused) {
  const auto dir = scratch();
  const json cfg = {{"copula", kClayton}, {"sample", {{"mode", "copula_qrs"}, {"randomization", "raw"}}}};
  EXPECT_EQ(run_config("sample", cfg, dir).code, 2);
}

TEST(Cli, GmmnMethodWithoutModelIsValidationError) {
  const auto dir = scratch();
  EXPECT_EQ(run_config("sample", {{"copula", kClayton}, {"sample", {{"mode", "gmmn_qrs"}}}}, dir).code, 2);
  const json missing = {{"copula", kClayton}, {"sample", {{"mode", "gmmn_qrs"}, {"model", (dir / "nope.txt").string()}}}};
  EXPECT_EQ(run_config("sample", missing, dir).code, 4);
}

TEST(Cli, GofRequiresPositiveReplications) {
  const auto dir = scratch();
  const json cfg = {{"copula", kClayton}, {"gof", {{"methods", {"copula_prs"}}, {"B", 0}}}};
  EXPECT_EQ(run_config("gof", cfg, dir).code, 2);
  const json none = {{"copula", kClayton}, {"gof", {{"methods", json::array()}}}};
  EXPECT_EQ(run_config("gof", none, dir).code, 2);
}

TEST(Cli, GofWritesOneRowPerReplication) {
  const auto dir = scratch();
  const json cfg = {{"copula", kClayton},
                    {"gof", {{"methods", {"copula_prs", "copula_qrs"}}, {"B", 4}, {"n", 200}}}};
  const auto r = run_config("gof", cfg, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = csv::read_table((dir / "out" / "gof.csv").string());
  ASSERT_EQ(t.rows.size(), 8u);
  for (const auto& row : t.rows) EXPECT_GT(std::stod(row[t.column("statistic")]), 0.0);
  EXPECT_EQ(t.rows[0][t.column("method")], "copula_PRS");
  EXPECT_EQ(t.rows[7][t.column("method")], "copula_QRS");
}

TEST(Cli, TrainDataOutsideUnitCubeReportsLocation) {
  const auto dir = scratch();
  std::ofstream(dir / "data.csv") << "u1,u2\n0.2,0.3\n0.4,1.5\n0.6,0.7\n";
  json train = tiny_train();
  train.erase("n_trn");
  train["data_csv"] = (dir / "data.csv").string();
  const auto r = run_config("train", {{"train", train}}, dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 2 column 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("1.5"), std::string::npos) << r.err;
}

TEST(Cli, TrainIsDeterministicAndReplayable) {
  const auto dir = scratch();
  const json cfg = {{"seed", 7}, {"copula", kClayton}, {"train", tiny_train()}};
  ASSERT_EQ(run_config("train", cfg, dir, "a").code, 0);
  ASSERT_EQ(run_config("train", cfg, dir, "b").code, 0);
  const std::string model = slurp(dir / "a" / "model.txt");
  ASSERT_FALSE(model.empty());
  EXPECT_EQ(model, slurp(dir / "b" / "model.txt"));
  EXPECT_EQ(slurp(dir / "a" / "loss_trace.csv"), slurp(dir / "b" / "loss_trace.csv"));
  const auto trace = csv::read_table((dir / "a" / "loss_trace.csv").string());
  EXPECT_EQ(trace.rows.size(), 3u);

  // The provenance record is itself a valid configuration reproducing the run.
  const auto replay = cli("train --config \"" + (dir / "a" / "provenance.json").string() + "\" --out \"" +
                              (dir / "c").string() + "\"",
                          dir);
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(model, slurp(dir / "c" / "model.txt"));

  // A different seed gives a different model.
  ASSERT_EQ(cli("train --seed 8 --config \"" + (dir / "config.json").string() + "\" --out \"" + (dir / "d").string() + "\"", dir)
                .code,
            0);
  EXPECT_NE(model, slurp(dir / "d" / "model.txt"));

  // The trained model feeds the sampler.
  const json s = {{"copula", kClayton},
                  {"sample", {{"mode", "gmmn_qrs"}, {"n", 100}, {"model", (dir / "a" / "model.txt").string()}}}};
  const auto r = run_config("sample", s, dir, "s");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv::read_matrix((dir / "s" / "sample.csv").string()).rows(), 100);
}

TEST(Cli, SampleReplayMatches) {
  const auto dir = scratch();
  const json cfg = {{"seed", 3}, {"copula", kClayton}, {"sample", {{"mode", "copula_qrs"}, {"n", 128}, {"replication", 5}}}};
  ASSERT_EQ(run_config("sample", cfg, dir, "a").code, 0);
  const auto replay = cli("sample --config \"" + (dir / "a" / "provenance.json").string() + "\" --out \"" +
                              (dir / "b").string() + "\"",
                          dir);
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(slurp(dir / "a" / "sample.csv"), slurp(dir / "b" / "sample.csv"));
  const auto prov = json::parse(slurp(dir / "a" / "provenance.json"));
  EXPECT_EQ(prov.at("provenance").at("command"), "sample");
  EXPECT_EQ(prov.at("provenance").at("seed"), 3);
}

TEST(Cli, ConvergeOnTruncatedGrid) {
  const auto dir = scratch();
  const json cfg = {{"copula", kClayton},
                    {"converge",
                     {{"methods", {"copula_prs", "copula_qrs"}},
                      {"B", 5},
                      {"n_min_exp", 6},
                      {"n_max_exp", 9},
                      {"functional", {{"type", "sobol_g"}}}}}};
  const auto r = run_config("converge", cfg, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sum = csv::read_table((dir / "out" / "summary.csv").string());
  // Half-step grid 2^6, 2^6.5, ..., 2^9: seven sizes per method.
  ASSERT_EQ(sum.rows.size(), 14u);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : sum.rows) seen.insert({row[sum.column("method")], row[sum.column("n_gen")]});
  EXPECT_EQ(seen.size(), 14u);
  EXPECT_TRUE(seen.count({"copula_PRS", "91"}));
  EXPECT_TRUE(seen.count({"copula_QRS", "512"}));
  EXPECT_EQ(csv::read_table((dir / "out" / "estimates.csv").string()).rows.size(), 70u);
  EXPECT_EQ(csv::read_table((dir / "out" / "fit.csv").string()).rows.size(), 2u);
  EXPECT_EQ(csv::read_table((dir / "out" / "vrf.csv").string()).rows.size(), 7u);
}

TEST(Cli, ConvergeValidation) {
  const auto dir = scratch();
  json conv = {{"methods", {"copula_prs"}}, {"B", 1}, {"functional", {{"type", "sobol_g"}}}};
  EXPECT_EQ(run_config("converge", {{"copula", kClayton}, {"converge", conv}}, dir).code, 2);
  conv["B"] = 4;
  conv["functional"] = {{"type", "expected_shortfall"}, {"level", 1.5}};
  EXPECT_EQ(run_config("converge", {{"copula", kClayton}, {"converge", conv}}, dir).code, 2);
}

TEST(Cli, BenchMarksUnavailableCellsNA) {
  const auto dir = scratch();
  const json nested_g = {{"family", "nested_gumbel"},
                         {"theta0", 1.5},
                         {"children", {{{"theta", 2.0}, {"indices", {0, 1}}}, {{"theta", 3.0}, {"indices", {2}}}}}};
  const json cfg = {{"bench",
                     {{"methods", {"copula_prs", "copula_qrs", "gmmn_qrs"}},
                      {"n", {256}},
                      {"repetitions", 2},
                      {"warmup", 0},
                      {"models", {{{"name", "clayton"}, {"copula", kClayton}}, {{"name", "nested"}, {"copula", nested_g}}}}}}};
  const auto r = run_config("bench", cfg, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = csv::read_table((dir / "out" / "table.csv").string());
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.header, (std::vector<std::string>{"method", "n", "clayton", "nested"}));
  EXPECT_NE(t.rows[0][2], "NA");
  EXPECT_NE(t.rows[0][3], "NA");
  EXPECT_NE(t.rows[1][2], "NA");
  EXPECT_EQ(t.rows[1][3], "NA");
  EXPECT_EQ(t.rows[2][2], "NA");
  const auto timing = csv::read_table((dir / "out" / "timing.csv").string());
  EXPECT_EQ(timing.rows.size(), 6u);
}
