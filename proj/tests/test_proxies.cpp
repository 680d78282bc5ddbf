#include <gtest/gtest.h>

#include <cmath>

#include "hytas/error.hpp"
#include "hytas/proxies.hpp"
#include "test_util.hpp"

using namespace hytas;

namespace {

struct Fixture {
  Genotype g = testutil::small_genotype();
  TokenGeometry geom = testutil::small_geometry();
  NetworkInstance net = build(g, geom, 42);
  TokenBatch batch = synth_batch(geom, Provenance::Random, 43, 8);
};

TEST(ProxyNames, ParseAndList) {
  EXPECT_EQ(parse_proxy("synflow"), ProxyId::Synflow);
  EXPECT_EQ(parse_proxy("zico++"), ProxyId::ZicoPP);
  EXPECT_EQ(parse_proxy("t-cet"), ProxyId::Tcet);
  EXPECT_FALSE(parse_proxy("bogus"));
  EXPECT_EQ(parse_proxy_list("all").size(), 14u);
  EXPECT_EQ(parse_proxy_list("snip,synflow,snip"), (std::vector<ProxyId>{ProxyId::Snip, ProxyId::Synflow}));
  try {
    parse_proxy_list("snip,bogus");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("zicopp"), std::string::npos);
  }
  for (ProxyId id : kAllProxies) EXPECT_EQ(parse_proxy(proxy_name(id)), id);
}

TEST(ZicoPP, WeightsFollowLayerDecay) {
  const auto w = zicopp_weights(18, 6);
  const std::vector<double> expect{1, 1, 1, 1, 1, 1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5, 1.0 / 6,
                                   1.0 / 7, 1.0 / 8, 1.0 / 9, 1.0 / 10, 1.0 / 11, 1.0 / 12, 1};
  EXPECT_EQ(w, expect);
  const std::vector<double> stats(18, 2.0);
  double sum = 0.0;
  for (double x : expect) sum += 2.0 * x;
  EXPECT_NEAR(zicopp_aggregate(stats, 6), sum, 1e-12);
  EXPECT_THROW(zicopp_weights(0, 6), ConfigError);
}

TEST(ZicoPP, DecayStartOneDecaysEveryInnerLayer) {
  const auto w = zicopp_weights(6, 1);
  EXPECT_EQ(w, (std::vector<double>{1.0, 0.5, 1.0 / 3, 0.25, 0.2, 1.0}));
}

TEST(Options, ValidateRanges) {
  ProxyOptions o;
  EXPECT_NO_THROW(o.validate());
  o.decay_start = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  o.decay_start = 18;
  EXPECT_THROW(o.validate(), ConfigError);
  o = {};
  o.variance_eps = 0.0;
  EXPECT_THROW(o.validate(), ConfigError);
}

TEST(Proxies, AllFiniteOnSmallNetwork) {
  Fixture f;
  ProxyEvaluator ev(f.net, f.batch, {}, 1);
  for (ProxyId id : kAllProxies) {
    const auto r = ev.compute(id);
    EXPECT_TRUE(std::isfinite(r.score)) << proxy_name(id);
    EXPECT_GE(r.seconds, 0.0);
  }
}

TEST(Proxies, FlopsProxyIsEstimate) {
  Fixture f;
  EXPECT_EQ(compute_proxy(ProxyId::Flops, f.net, f.batch, {}), static_cast<double>(flops_estimate(f.g, f.geom)));
}

TEST(Proxies, EvaluatorMatchesStandaloneCalls) {
  Fixture f;
  ProxyEvaluator ev(f.net, f.batch, {}, 5);
  for (ProxyId id : {ProxyId::Snip, ProxyId::Fisher, ProxyId::Zico, ProxyId::Naswot}) {
    EXPECT_EQ(ev.compute(id).score, compute_proxy(id, f.net, f.batch, {}, 5)) << proxy_name(id);
  }
}

TEST(Proxies, DataAgnosticIgnoreBatchAndRestoreParameters) {
  Fixture f;
  const auto before = f.net.parameter_values();
  const auto other = synth_batch(f.geom, Provenance::Random, 999, 8);
  for (ProxyId id : {ProxyId::Synflow, ProxyId::LogSynflow, ProxyId::Dss}) {
    EXPECT_TRUE(is_data_agnostic(id));
    EXPECT_EQ(compute_proxy(id, f.net, f.batch, {}), compute_proxy(id, f.net, other, {})) << proxy_name(id);
  }
  EXPECT_EQ(f.net.parameter_values(), before);
  EXPECT_FALSE(is_data_agnostic(ProxyId::Snip));
}

TEST(Proxies, SignRemovalChangesSynflowFamily) {
  Fixture f;
  ProxyOptions sr;
  sr.sign_removal = true;
  EXPECT_NE(compute_proxy(ProxyId::Synflow, f.net, f.batch, {}), compute_proxy(ProxyId::Synflow, f.net, f.batch, sr));
  EXPECT_EQ(compute_proxy(ProxyId::Snip, f.net, f.batch, {}), compute_proxy(ProxyId::Snip, f.net, f.batch, sr));
}

TEST(Proxies, SnipAndGradnormArePositive) {
  Fixture f;
  EXPECT_GT(compute_proxy(ProxyId::Snip, f.net, f.batch, {}), 0.0);
  EXPECT_GT(compute_proxy(ProxyId::GradNorm, f.net, f.batch, {}), 0.0);
  EXPECT_GT(compute_proxy(ProxyId::Synflow, f.net, f.batch, {}), 0.0);
}

TEST(Proxies, SnipScalesWithLoss) {
  Fixture f;
  ProxyOptions twice;
  twice.loss_scale = 2.0;
  const double a = compute_proxy(ProxyId::Snip, f.net, f.batch, {});
  const double b = compute_proxy(ProxyId::Snip, f.net, f.batch, twice);
  EXPECT_NEAR(b, 2.0 * a, 1e-12 * b);
}

TEST(Proxies, NaswotDuplicateSamplesFlaggedDegenerate) {
  Fixture f;
  auto batch = synth_batch(f.geom, Provenance::Random, 7, 4);
  auto d = batch.data.data();
  const std::size_t per = d.size() / 4;
  std::copy_n(d.begin(), per, d.begin() + static_cast<std::ptrdiff_t>(per));
  ProxyEvaluator ev(f.net, batch, {}, 1);
  const auto r = ev.compute(ProxyId::Naswot);
  EXPECT_TRUE(std::isfinite(r.score));
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.note.empty());
}

TEST(ModuleSplit, IdentitiesHold) {
  Fixture f;
  for (ProxyId id : {ProxyId::Snip, ProxyId::GradNorm, ProxyId::Synflow, ProxyId::Dss}) {
    const auto s = compute_module_split(id, f.net, f.batch, {});
    EXPECT_EQ(s.origin, s.msa + s.mlp) << proxy_name(id);
    ASSERT_TRUE(s.logarithm) << proxy_name(id);
    EXPECT_NEAR(*s.logarithm, std::log(s.msa) + std::log(s.mlp), 1e-12);
  }
  EXPECT_THROW(compute_module_split(ProxyId::Fisher, f.net, f.batch, {}), ConfigError);
}

TEST(ModuleSplit, OriginIsBlockRestrictedSnip) {
  Fixture f;
  ProxyEvaluator ev(f.net, f.batch, {}, 1);
  const auto per_entry = ev.entry_contributions(ProxyId::Snip);
  ASSERT_EQ(per_entry.size(), f.net.registry.size());
  double blocks = 0.0;
  for (std::size_t i = 1; i + 1 < per_entry.size(); ++i) blocks += per_entry[i];
  EXPECT_NEAR(make_module_split(f.net, per_entry).origin, blocks, 1e-12 * blocks);
}

TEST(ModuleSplit, ZeroedMlpDropsLogarithm) {
  Fixture f;
  for (const auto& e : f.net.registry) {
    if (!is_mlp(e.kind)) continue;
    for (std::size_t p : e.params) f.net.params[p].value.fill(0.0);
  }
  const auto s = compute_module_split(ProxyId::Snip, f.net, f.batch, {});
  EXPECT_EQ(s.mlp, 0.0);
  EXPECT_FALSE(s.logarithm);

  ProxyOptions split;
  split.module_split = true;
  ProxyEvaluator ev(f.net, f.batch, split, 1);
  const auto r = ev.compute(ProxyId::Snip);
  ASSERT_TRUE(r.split);
  EXPECT_NE(r.note.find("non-positive module score"), std::string::npos) << r.note;
}

TEST(Population, WorkerCountDoesNotChangeScores) {
  const auto pop = sample_population(testutil::small_space(6, 4));
  const auto geom = testutil::small_geometry();
  const auto batch = synth_batch(geom, Provenance::Random, 1, 8);
  PopulationConfig cfg;
  cfg.proxies = parse_proxy_list("snip,synflow,naswot,zicopp,croze");
  cfg.geometry = geom;
  cfg.seed = 77;
  const auto a = score_population(pop, batch, cfg);
  cfg.workers = 4;
  const auto b = score_population(pop, batch, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].genotype, pop[i]);
    EXPECT_EQ(a[i].scores, b[i].scores);
    EXPECT_EQ(a[i].flags, b[i].flags);
  }
}

TEST(Population, BadBatchGeometryBecomesFlags) {
  const auto pop = sample_population(testutil::small_space(2, 4));
  const auto batch = synth_batch({7, 10, 4}, Provenance::Random, 1, 4);
  PopulationConfig cfg;
  cfg.proxies = {ProxyId::Snip};
  cfg.geometry = {5, 10, 4};
  const auto recs = score_population(pop, batch, cfg);
  for (const auto& r : recs) {
    EXPECT_TRUE(std::isnan(r.scores.at(ProxyId::Snip)));
    ASSERT_FALSE(r.flags.empty());
    EXPECT_NE(r.flags[0].find("error"), std::string::npos);
  }
}

}  // namespace
