#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "hytas/cli.hpp"
#include "hytas/score_table.hpp"
#include "test_util.hpp"

using namespace hytas;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Small population and score table shared by the downstream command tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("cli_pipeline");
    ASSERT_EQ(run({"sample", "--count", "12", "--seed", "3", "--out", *dir_ / "pop", "--depth", "4:5:1",
                   "--embed-dim", "32:48:16", "--heads", "3:4:1", "--mlp-ratio", "1:2:1"})
                  .code,
              0);
    const auto r = run({"score", "--genotypes", *dir_ / "pop/genotypes.jsonl", "--input", "synth:8x8x60",
                        "--proxies", "snip,gradnorm,synflow,dss,zico,fisher", "--seed", "5", "--batch-size", "8",
                        "--out", *dir_ / "scores", "--module-split"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& p) { return *dir_ / p; }

  static testutil::TempDir* dir_;
};

testutil::TempDir* CliPipeline::dir_ = nullptr;

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run({"--help"}).code, 0);
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_EQ(v.out, std::string(HYTAS_VERSION) + "\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  testutil::TempDir dir("cli_usage");
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"sample", "--count", "5", "--out", dir / "x"}).code, kExitUsage);
  EXPECT_EQ(run({"sample", "--count", "0", "--seed", "1", "--out", dir / "x"}).code, kExitUsage);
  EXPECT_EQ(run({"sample", "--seed", "1", "--out", dir / "x", "--depth", "4-10"}).code, kExitUsage);
  EXPECT_EQ(run({"sample", "--seed", "1", "--out", dir / "x", "--depth", "2:10:1"}).code, kExitUsage);
}

TEST(Cli, SampleIsReproducible) {
  testutil::TempDir dir("cli_sample");
  const auto r = run({"sample", "--count", "2000", "--seed", "7", "--out", dir / "a"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run({"sample", "--count", "2000", "--seed", "7", "--out", dir / "b"}).code, 0);
  const auto a = testutil::slurp(dir / "a/genotypes.jsonl");
  EXPECT_EQ(count_lines(a), 2000u);
  EXPECT_EQ(a, testutil::slurp(dir / "b/genotypes.jsonl"));
  const auto m = nlohmann::json::parse(testutil::slurp(dir / "a/manifest.json"));
  EXPECT_EQ(m["command"], "sample");
  EXPECT_EQ(m["config"]["seed"], 7);
  EXPECT_EQ(m["config"]["count"], 2000);
  EXPECT_EQ(m["version"], HYTAS_VERSION);
}

TEST_F(CliPipeline, ScoreTableHasRequestedColumns) {
  const auto t = read_score_csv(path("scores/scores.csv"));
  EXPECT_EQ(t.rows.size(), 12u);
  for (const char* c : {"snip", "gradnorm", "synflow", "dss", "zico", "fisher", "time_snip", "snip_msa",
                        "synflow_logarithm"}) {
    EXPECT_TRUE(t.has_column(c)) << c;
  }
  const auto m = nlohmann::json::parse(testutil::slurp(path("scores/manifest.json")));
  EXPECT_TRUE(m.contains("search_seconds"));
  EXPECT_EQ(m["config"]["input"], "synth:8x8x60");
}

TEST_F(CliPipeline, UnknownProxyListsValidIds) {
  const auto r = run({"score", "--genotypes", path("pop/genotypes.jsonl"), "--input", "synth:8x8x60", "--proxies",
                      "snip,nope", "--seed", "1", "--out", path("bad")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("valid ids"), std::string::npos);
}

TEST_F(CliPipeline, MissingGenotypesIsRuntimeError) {
  const auto r = run({"score", "--genotypes", path("nope.jsonl"), "--input", "synth:8x8x60", "--seed", "1",
                      "--out", path("bad")});
  EXPECT_EQ(r.code, kExitRuntime);
}

TEST_F(CliPipeline, WorkerCountGivesIdenticalCsv) {
  for (const char* w : {"1", "3"}) {
    const auto r = run({"score", "--genotypes", path("pop/genotypes.jsonl"), "--input", "synth:8x8x60", "--proxies",
                        "snip,naswot,zicopp", "--seed", "5", "--batch-size", "8", "--no-timing", "--workers", w,
                        "--out", path(std::string("w") + w)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(testutil::slurp(path("w1/scores.csv")), testutil::slurp(path("w3/scores.csv")));
}

TEST_F(CliPipeline, WorkersFromEnvironment) {
  setenv("HYTAS_WORKERS", "zero", 1);
  const auto r = run({"score", "--genotypes", path("pop/genotypes.jsonl"), "--input", "synth:8x8x60", "--proxies",
                      "snip", "--seed", "5", "--out", path("env")});
  unsetenv("HYTAS_WORKERS");
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliPipeline, AnalyzeWithoutTargetEmitsFactorsOnly) {
  ASSERT_EQ(run({"analyze", "--scores", path("scores/scores.csv"), "--out", path("an1")}).code, 0);
  ASSERT_EQ(run({"analyze", "--scores", path("scores/scores.csv"), "--out", path("an2")}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(path("an1/factor_correlation.csv")));
  EXPECT_FALSE(std::filesystem::exists(path("an1/ranked.csv")));
  EXPECT_EQ(testutil::slurp(path("an1/report.json")), testutil::slurp(path("an2/report.json")));
  EXPECT_EQ(testutil::slurp(path("an1/factor_correlation.csv")), testutil::slurp(path("an2/factor_correlation.csv")));
  const auto r = run({"analyze", "--scores", path("scores/scores.csv"), "--out", path("an3"), "--buckets"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("target"), std::string::npos);
  const auto r2 = run({"analyze", "--scores", path("scores/scores.csv"), "--out", path("an4"), "--target", "oa"});
  EXPECT_EQ(r2.code, kExitRuntime);
  EXPECT_NE(r2.err.find("'oa'"), std::string::npos);
}

TEST_F(CliPipeline, RankAnalyzePredictWithTargets) {
  const auto t = read_score_csv(path("scores/scores.csv"));
  std::vector<double> oa;
  for (const auto& r : t.rows) oa.push_back(0.001 * r.embed_dim + 0.01 * r.depth);
  const auto ids = t.ids();
  write_targets_csv(path("targets.csv"), "oa", ids, oa);

  const auto rk = run({"rank", "--scores", path("scores/scores.csv"), "--targets", path("targets.csv"), "--out",
                       path("rank")});
  ASSERT_EQ(rk.code, 0) << rk.err;
  const auto ranked = testutil::slurp(path("rank/ranked.csv"));
  EXPECT_EQ(ranked.substr(0, ranked.find('\n')), "proxy,rho,argmax_id,argmax_ms,proposed_oa");
  EXPECT_NE(ranked.find("\noracle,"), std::string::npos);

  const auto an = run({"analyze", "--scores", path("scores/scores.csv"), "--targets", path("targets.csv"), "--out",
                       path("an"), "--genotypes", path("pop/genotypes.jsonl"), "--input", "synth:8x8x60",
                       "--batch-size", "8", "--seed", "2"});
  ASSERT_EQ(an.code, 0) << an.err;
  for (const char* f : {"ranked.csv", "bucket_analysis.csv", "factor_correlation.csv", "sensitivity.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(path(std::string("an/") + f))) << f;
  }

  const auto pr = run({"predict", "--scores", path("scores/scores.csv"), "--targets", path("targets.csv"),
                       "--train-sizes", "5,8", "--repeats", "3", "--trees", "10", "--seed", "4", "--out",
                       path("pred")});
  ASSERT_EQ(pr.code, 0) << pr.err;
  const auto curve = testutil::slurp(path("pred/learning_curve.csv"));
  EXPECT_EQ(count_lines(curve), 3u);
  const auto model = nlohmann::json::parse(testutil::slurp(path("pred/model.json")));
  EXPECT_EQ(model["trees"].size(), 10u);

  const auto missing = run({"predict", "--scores", path("scores/scores.csv"), "--seed", "4", "--out", path("p2")});
  EXPECT_EQ(missing.code, kExitRuntime);
}

TEST_F(CliPipeline, ReportLabelsToyTargets) {
  const auto r = run({"report", "--genotypes", path("pop/genotypes.jsonl"), "--scores", path("scores/scores.csv"),
                      "--input", "synth:8x8x60", "--seed", "6", "--epochs", "1", "--train-samples", "64",
                      "--test-samples", "32", "--out", path("report")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto targets = testutil::slurp(path("report/targets.csv"));
  EXPECT_EQ(targets.substr(0, targets.find('\n')), "id,toy_oa");
  EXPECT_EQ(count_lines(targets), 13u);
  const auto rep = nlohmann::json::parse(testutil::slurp(path("report/report.json")));
  EXPECT_EQ(rep["target_kind"], "TOY");
}

}  // namespace
