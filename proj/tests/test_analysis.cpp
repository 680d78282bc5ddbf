#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hytas/analysis.hpp"
#include "hytas/error.hpp"
#include "test_util.hpp"

using namespace hytas;

namespace {

ScoreTable make_table(const std::vector<double>& ms, const std::vector<double>& score, const std::vector<double>& target) {
  ScoreTable t;
  t.value_columns = {"snip", "oa"};
  for (std::size_t i = 0; i < ms.size(); ++i) {
    ScoreRow r;
    r.id = "g" + std::to_string(i);
    r.formula_ms = static_cast<std::int64_t>(ms[i]);
    r.depth = 4 + static_cast<int>(i % 7);
    r.embed_dim = 32 + 16 * static_cast<int>(i % 14);
    r.values["snip"] = score[i];
    r.values["oa"] = target[i];
    t.rows.push_back(std::move(r));
  }
  return t;
}

TEST(Spearman, KnownValues) {
  EXPECT_DOUBLE_EQ(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0);
  EXPECT_NEAR(*spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-15);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 10, 30}), (std::vector<double>{1.5, 3, 1.5, 4}));
  const std::vector<double> x{1, 1, 2, 3};
  const std::vector<double> y{1, 2, 3, 4};
  // ranks (1.5, 1.5, 3, 4) vs (1, 2, 3, 4)
  EXPECT_NEAR(*spearman(x, y), 0.9486832980505138, 1e-14);
}

TEST(Spearman, ConstantInputIsUndefined) {
  EXPECT_FALSE(spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}));
}

TEST(Spearman, InvalidInputsThrow) {
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(spearman(std::vector<double>{1, NAN}, std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), DimensionError);
}

TEST(Spearman, RankInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  std::vector<double> x(50), y(50);
  for (auto& v : x) v = d(rng);
  for (auto& v : y) v = d(rng);
  const double rho = *spearman(x, y);
  EXPECT_EQ(rho, *spearman(average_ranks(x), average_ranks(y)));
  std::vector<double> ex(50);
  for (std::size_t i = 0; i < 50; ++i) ex[i] = std::exp(3 * x[i]) + 7;
  EXPECT_NEAR(rho, *spearman(ex, y), 1e-12);
}

TEST(Argmax, TiesBrokenBySmallestId) {
  const std::vector<double> s{1.0, 5.0, NAN, 5.0};
  const std::vector<std::string> ids{"d", "c", "a", "b"};
  EXPECT_EQ(argmax_row(s, ids), 3u);
  EXPECT_FALSE(argmax_row(std::vector<double>{NAN}, std::vector<std::string>{"x"}));
}

TEST(Ranking, ProposedEqualsTargetAtArgmax) {
  const auto t = make_table({1e6, 2e6, 3e6, 4e6, 6e6, 7e6}, {5, 1, 3, 2, 6, 4}, {0.5, 0.9, 0.6, 0.4, 0.7, 0.8});
  const std::vector<std::string> cols{"snip"};
  const auto rt = rank_table(t, cols, "oa");
  ASSERT_EQ(rt.proxies.size(), 1u);
  EXPECT_EQ(rt.proxies[0].argmax_id, "g4");
  EXPECT_DOUBLE_EQ(*rt.proxies[0].proposed_target, 0.7);
  EXPECT_DOUBLE_EQ(*rt.oracle, 0.9);
  EXPECT_EQ(rt.oracle_id, "g1");
  EXPECT_EQ(rt.proxies[0].argmax_ms, 6000000);
  EXPECT_THROW(rank_table(t, std::vector<std::string>{"missing"}, "oa"), DataError);
}

TEST(Buckets, TwoBucketsHandComputed) {
  const auto t = make_table({1e6, 2e6, 3e6, 6e6, 7e6, 8e6}, {1, 2, 3, 3, 1, 2}, {0.1, 0.3, 0.2, 0.9, 0.7, 0.8});
  const std::vector<std::string> cols{"snip"};
  const std::vector<double> edges{0, 5e6, 1e7};
  const auto b = bucket_analysis(t, cols, "oa", edges);
  ASSERT_EQ(b.size(), 2u);
  // bucket 1: ranks (1,2,3) vs (1,3,2) -> 0.5; bucket 2: (3,1,2) vs (3,1,2) -> 1
  EXPECT_NEAR(*b[0].ranking.proxies[0].rho, 0.5, 1e-15);
  EXPECT_NEAR(*b[1].ranking.proxies[0].rho, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(*b[0].ranking.oracle, 0.3);
  EXPECT_DOUBLE_EQ(*b[1].ranking.oracle, 0.9);
  for (const auto& bucket : b) {
    EXPECT_GE(*bucket.ranking.oracle, *bucket.ranking.proxies[0].proposed_target);
  }
}

TEST(Buckets, SingleBucketEqualsGlobal) {
  const auto t = make_table({1e6, 2e6, 3e6, 6e6, 7e6, 8e6}, {1, 2, 3, 3, 1, 2}, {0.1, 0.3, 0.2, 0.9, 0.7, 0.8});
  const std::vector<std::string> cols{"snip"};
  const auto global = rank_table(t, cols, "oa");
  const std::vector<double> edges{0, 1e7};
  const auto b = bucket_analysis(t, cols, "oa", edges);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(*b[0].ranking.proxies[0].rho, *global.proxies[0].rho);
  EXPECT_EQ(b[0].ranking.proxies[0].argmax_id, global.proxies[0].argmax_id);
  EXPECT_EQ(*b[0].ranking.oracle, *global.oracle);
}

TEST(Buckets, SparseBucketsOmitRho) {
  const auto t = make_table({1e6, 2e6, 6e6, 7e6, 8e6}, {1, 2, 3, 1, 2}, {0.1, 0.3, 0.9, 0.7, 0.8});
  const std::vector<std::string> cols{"snip"};
  const std::vector<double> edges{0, 5e6, 1e7};
  const auto b = bucket_analysis(t, cols, "oa", edges);
  EXPECT_TRUE(b[0].sparse);
  EXPECT_FALSE(b[0].ranking.proxies[0].rho);
  EXPECT_FALSE(b[1].sparse);
  EXPECT_THROW(bucket_analysis(t, cols, "", edges), DataError);
  const std::vector<double> narrow{0, 5e6};
  EXPECT_THROW(bucket_analysis(t, cols, "oa", narrow), ConfigError);
}

TEST(Buckets, DefaultEdgesCoverRange) {
  EXPECT_EQ(default_bucket_edges(11.1e6), (std::vector<double>{0, 5e6, 1e7, 1.5e7}));
  EXPECT_EQ(default_bucket_edges(5e6), (std::vector<double>{0, 5e6, 1e7}));
}

TEST(FactorCorrelation, IdentityAndConstantColumns) {
  std::vector<double> ms, score, target;
  for (int i = 0; i < 14; ++i) {
    ms.push_back(1e6 * (i + 1));
    score.push_back(32 + 16 * i);
    target.push_back(0.5);
  }
  auto t = make_table(ms, score, target);
  const std::vector<std::string> cols{"snip"};
  const auto m = factor_correlation(t, cols, "oa");
  ASSERT_EQ(m.rows.size(), 2u);
  ASSERT_EQ(m.cols.size(), kFactorNames.size());
  EXPECT_NEAR(*m.at(0, 1), 1.0, 1e-15);  // snip == embed_dim
  EXPECT_FALSE(m.at(1, 0));              // constant target
  t.rows.resize(9);
  EXPECT_THROW(factor_correlation(t, cols), DataError);
}

TEST(FactorCorrelation, IgnoredFactorHasSmallRho) {
  const auto pop = sample_population([] {
    SearchSpaceConfig c;
    c.sample_count = 400;
    c.seed = 12;
    return c;
  }());
  ScoreTable t;
  t.value_columns = {"oa"};
  for (const auto& g : pop) {
    ScoreRow r;
    r.id = g.id;
    r.depth = g.depth;
    r.embed_dim = g.embed_dim;
    r.mean_heads = mean_heads(g);
    r.mean_mlp_ratio = mean_mlp_ratio(g);
    r.sum_head_dim = sum_head_dim(g);
    r.sum_mlp_dim = sum_mlp_dim(g);
    r.formula_ms = model_size_formula(g, 16);
    r.values["oa"] = std::log(static_cast<double>(g.embed_dim));
    t.rows.push_back(std::move(r));
  }
  const auto m = factor_correlation(t, std::vector<std::string>{}, "oa");
  EXPECT_NEAR(*m.at(0, 1), 1.0, 1e-12);
  EXPECT_LT(std::abs(*m.at(0, 3)), 0.15);
}

TEST(ToyTrain, ZeroEpochsKeepsBaseline) {
  const auto geom = testutil::small_geometry();
  auto net = build(testutil::small_genotype(), geom, 5);
  const auto task = make_toy_task(geom, 2, 64, 32, 1.0, 3);
  const auto r = toy_train(net, task, {0, 0.05, 16, 1});
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(r.accuracy, r.baseline_accuracy);
}

TEST(ToyTrain, SeparableTaskIsLearnedDeterministically) {
  const auto geom = testutil::small_geometry();
  const auto task = make_toy_task(geom, 2, 400, 200, 2.0, 3);
  auto run = [&] {
    auto net = build(testutil::small_genotype(), geom, 5);
    return toy_train(net, task, {20, 0.05, 40, 9});
  };
  const auto r = run();
  EXPECT_EQ(r.steps, 200u);
  EXPECT_GT(r.accuracy, 0.9);
  EXPECT_LT(r.loss_after, r.loss_before);
  EXPECT_EQ(run().accuracy, r.accuracy);
}

TEST(ToyTrain, DivergenceReportsEpoch) {
  const auto geom = testutil::small_geometry();
  auto net = build(testutil::small_genotype(), geom, 5);
  const auto task = make_toy_task(geom, 2, 64, 32, 1.0, 3);
  try {
    toy_train(net, task, {3, 1e300, 16, 1});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Sensitivity, DataAgnosticProxiesAgreeExactly) {
  const auto pop = sample_population(testutil::small_space(5, 2));
  const auto geom = testutil::small_geometry();
  PopulationConfig cfg;
  cfg.proxies = {ProxyId::Synflow, ProxyId::Snip};
  cfg.geometry = geom;
  cfg.seed = 4;
  const auto a = synth_batch(geom, Provenance::Random, 1, 8);
  const auto b = synth_batch(geom, Provenance::Random, 2, 8);
  const auto rows = sensitivity_random_input(pop, a, b, cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(*rows[0].rho, 1.0);
  EXPECT_TRUE(rows[0].argmax_agree);
  EXPECT_TRUE(rows[1].rho);
}

}  // namespace
