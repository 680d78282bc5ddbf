#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hytas/analysis.hpp"
#include "hytas/error.hpp"
#include "hytas/predictor.hpp"

using namespace hytas;

namespace {

std::vector<FeatureRow> random_rows(std::size_t n, unsigned seed, int target_feature) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> embed(0, 13);
  std::normal_distribution<double> d;
  std::vector<FeatureRow> rows(n);
  for (auto& r : rows) {
    r.x.resize(kFeatureNames.size());
    for (auto& v : r.x) v = d(rng);
    r.x[1] = 32 + 16 * embed(rng);
    if (target_feature >= 0) r.target = r.x[static_cast<std::size_t>(target_feature)];
  }
  return rows;
}

TEST(Forest, ConstantTargetPredictsConstant) {
  auto rows = random_rows(30, 1, -1);
  for (auto& r : rows) r.target = 0.73;
  const auto m = fit_forest(rows, {}, 5);
  EXPECT_TRUE(m.constant_target);
  for (double p : m.predict(rows)) EXPECT_EQ(p, 0.73);
  const std::vector<double> far(kFeatureNames.size(), 1e9);
  EXPECT_EQ(m.predict(far), 0.73);
}

TEST(Forest, LearnsFeatureDeterminedTarget) {
  const auto rows = random_rows(200, 2, 1);
  const auto m = fit_forest(rows, {}, 7);
  EXPECT_EQ(m.trees.size(), 100u);
  EXPECT_EQ(m.params.features_per_split, 4u);
  const auto pred = m.predict(rows);
  std::vector<double> y;
  for (const auto& r : rows) y.push_back(*r.target);
  EXPECT_GE(*spearman(pred, y), 0.99);
}

TEST(Forest, DeterministicAcrossRunsAndWorkers) {
  const auto rows = random_rows(80, 3, 4);
  const auto a = fit_forest(rows, {}, 11, 1);
  const auto b = fit_forest(rows, {}, 11, 4);
  EXPECT_EQ(a.predict(rows), b.predict(rows));
  EXPECT_EQ(a.seeds, b.seeds);
  const auto c = fit_forest(rows, {}, 12, 1);
  EXPECT_NE(a.predict(rows), c.predict(rows));
}

TEST(Forest, AveragesTrees) {
  ForestModel m;
  m.features = 1;
  m.trees.resize(2);
  m.trees[0].nodes = {TreeNode{-1, 0, -1, -1, 0.0}};
  m.trees[1].nodes = {TreeNode{-1, 0, -1, -1, 1.0}};
  EXPECT_EQ(m.predict(std::vector<double>{3.0}), 0.5);
  m.trees.resize(1);
  EXPECT_EQ(m.predict(std::vector<double>{3.0}), 0.0);
}

TEST(Forest, ExtrapolatesAsConstantBeyondLastSplit) {
  std::vector<FeatureRow> rows;
  for (int i = 0; i < 20; ++i) {
    FeatureRow r;
    r.x = std::vector<double>(kFeatureNames.size(), 0.0);
    r.x[0] = i;
    r.target = i < 10 ? 0.0 : 1.0;
    rows.push_back(r);
  }
  ForestParams p;
  p.trees = 1;
  p.bootstrap = false;
  p.features_per_split = kFeatureNames.size();
  const auto m = fit_forest(rows, p, 1);
  std::vector<double> x(kFeatureNames.size(), 0.0);
  x[0] = 1e6;
  EXPECT_EQ(m.predict(x), 1.0);
  x[0] = -1e6;
  EXPECT_EQ(m.predict(x), 0.0);
  EXPECT_EQ(m.trees[0].nodes[0].threshold, 9.5);
}

TEST(Forest, FeatureCountMismatchIsContractError) {
  const auto rows = random_rows(20, 4, 0);
  const auto m = fit_forest(rows, {}, 1);
  EXPECT_THROW(m.predict(std::vector<double>{1.0, 2.0}), ContractError);
}

TEST(Forest, RejectsBadTrainingData) {
  auto rows = random_rows(4, 5, 0);
  EXPECT_THROW(fit_forest(rows, {}, 1), DataError);
  rows = random_rows(10, 5, 0);
  rows[3].target.reset();
  EXPECT_THROW(fit_forest(rows, {}, 1), DataError);
  rows = random_rows(10, 5, 0);
  rows[2].x[3] = NAN;
  EXPECT_THROW(fit_forest(rows, {}, 1), DataError);
}

TEST(Forest, JsonRoundTrip) {
  const auto rows = random_rows(60, 6, 2);
  ForestParams p;
  p.trees = 7;
  const auto m = fit_forest(rows, p, 3);
  const auto j = m.to_json();
  EXPECT_EQ(j["params"]["trees"], 7);
  EXPECT_EQ(j["features"].size(), kFeatureNames.size());
  const auto back = ForestModel::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.predict(rows), m.predict(rows));
  EXPECT_THROW(ForestModel::from_json(nlohmann::json::parse("{}")), FormatError);
}

TEST(Forest, AffineTargetKeepsRanking) {
  auto rows = random_rows(60, 7, 5);
  const auto a = fit_forest(rows, {}, 9).predict(rows);
  for (auto& r : rows) r.target = 3.0 * *r.target + 10.0;
  const auto b = fit_forest(rows, {}, 9).predict(rows);
  EXPECT_EQ(average_ranks(a), average_ranks(b));
}

TEST(LearningCurve, RepeatsAndNoiselessTarget) {
  const auto rows = random_rows(40, 8, 0);
  const std::vector<std::size_t> sizes{20, 30};
  const auto c = learning_curve(rows, sizes, 5, 1);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].rhos.size() + c[0].dropped, 5u);
  EXPECT_EQ(c[0].rhos.size(), 5u);
  for (double r : c[1].rhos) EXPECT_GT(r, 0.5);
  EXPECT_EQ(c[1].rhos.size(), 5u);
  const std::vector<std::size_t> bad{40};
  EXPECT_THROW(learning_curve(rows, bad, 5, 1), ConfigError);
}

TEST(LearningCurve, ConstantHeldOutTargetDropsRepeat) {
  auto rows = random_rows(12, 9, -1);
  for (auto& r : rows) r.target = 1.0;
  rows[0].target = 2.0;
  const std::vector<std::size_t> sizes{10};
  const auto c = learning_curve(rows, sizes, 6, 3);
  EXPECT_EQ(c[0].rhos.size() + c[0].dropped, 6u);
  EXPECT_GT(c[0].dropped, 0u);
}

}  // namespace
