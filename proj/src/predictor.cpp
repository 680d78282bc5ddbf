#include "hytas/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hytas/analysis.hpp"
#include "hytas/error.hpp"
#include "hytas/rng.hpp"

namespace hytas {

std::vector<FeatureRow> feature_rows(const ScoreTable& table, const std::string& target_column) {
  std::vector<std::vector<double>> cols;
  for (const char* name : kFeatureNames) {
    if (!table.has_column(name)) throw DataError(std::string("predictor: score table lacks column '") + name + "'");
    cols.push_back(table.column(name));
  }
  std::vector<double> target;
  if (!target_column.empty()) {
    if (!table.has_column(target_column)) throw DataError("predictor: missing target column '" + target_column + "'");
    target = table.column(target_column);
  }
  std::vector<FeatureRow> rows(table.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& c : cols) rows[i].x.push_back(c[i]);
    if (!target.empty()) rows[i].target = target[i];
  }
  return rows;
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const auto& n = nodes[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[at].value;
}

double ForestModel::predict(std::span<const double> x) const {
  if (x.size() != features) {
    throw ContractError("predict: expected " + std::to_string(features) + " features, got " + std::to_string(x.size()));
  }
  if (constant_target && !trees.empty()) return trees.front().predict(x);
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

std::vector<double> ForestModel::predict(std::span<const FeatureRow> rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict(r.x));
  return out;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t left_count = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureRow> rows, const ForestParams& params, std::size_t mtry, Rng rng)
      : rows_(rows), params_(params), mtry_(mtry), rng_(std::move(rng)) {}

  RegressionTree build(std::vector<std::size_t> samples) {
    RegressionTree tree;
    grow(tree, samples, 0);
    return tree;
  }

 private:
  double y(std::size_t i) const { return *rows_[i].target; }

  int grow(RegressionTree& tree, std::vector<std::size_t>& samples, int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double total = 0.0;
    for (std::size_t i : samples) total += y(i);
    const auto n = static_cast<double>(samples.size());
    const bool pure = std::all_of(samples.begin(), samples.end(), [&](std::size_t i) { return y(i) == y(samples[0]); });
    tree.nodes[index].value = pure ? y(samples[0]) : total / n;
    if (pure) return index;
    const bool depth_limited = params_.max_depth > 0 && depth >= params_.max_depth;
    if (depth_limited || samples.size() < 2 * params_.min_leaf) return index;
    const auto split = best_split(samples, total);
    if (split.feature < 0) return index;

    const auto f = static_cast<std::size_t>(split.feature);
    std::vector<std::size_t> left, right;
    for (std::size_t i : samples) (rows_[i].x[f] <= split.threshold ? left : right).push_back(i);
    std::vector<std::size_t>().swap(samples);
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    tree.nodes[index].feature = split.feature;
    tree.nodes[index].threshold = split.threshold;
    tree.nodes[index].left = l;
    tree.nodes[index].right = r;
    return index;
  }

  Split best_split(const std::vector<std::size_t>& samples, double total) {
    const std::size_t p = rows_.front().x.size();
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), 0);
    const auto n = static_cast<double>(samples.size());
    const double parent = total * total / n;
    Split best;
    std::vector<std::size_t> order(samples);
    std::size_t visited = 0;
    for (std::size_t k = 0; k < p; ++k) {
      // Draw features without replacement; keep going past mtry until a valid split exists.
      std::uniform_int_distribution<std::size_t> pick(k, p - 1);
      std::swap(features[k], features[pick(rng_)]);
      if (visited >= mtry_ && best.feature >= 0) break;
      ++visited;
      const std::size_t f = features[k];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double xa = rows_[a].x[f];
        const double xb = rows_[b].x[f];
        return xa < xb || (xa == xb && a < b);
      });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left_sum += y(order[i]);
        const std::size_t nl = i + 1;
        const std::size_t nr = order.size() - nl;
        const double xa = rows_[order[i]].x[f];
        const double xb = rows_[order[i + 1]].x[f];
        if (xa == xb || nl < params_.min_leaf || nr < params_.min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent;
        if (gain > best.gain + 1e-12 * std::abs(parent)) {
          double mid = xa + (xb - xa) / 2.0;
          if (mid >= xb) mid = xa;
          best = Split{static_cast<int>(f), mid, gain, nl};
        }
      }
    }
    return best;
  }

  std::span<const FeatureRow> rows_;
  const ForestParams& params_;
  std::size_t mtry_;
  Rng rng_;
};

nlohmann::ordered_json node_json(const RegressionTree& t, int at) {
  const auto& n = t.nodes[static_cast<std::size_t>(at)];
  nlohmann::ordered_json j;
  if (n.feature < 0) {
    j["value"] = n.value;
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["value"] = n.value;
  j["left"] = node_json(t, n.left);
  j["right"] = node_json(t, n.right);
  return j;
}

int node_from_json(RegressionTree& t, const nlohmann::json& j) {
  const int index = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  t.nodes.back().value = j.at("value").get<double>();
  if (j.contains("feature")) {
    const int f = j.at("feature").get<int>();
    const double th = j.at("threshold").get<double>();
    const int l = node_from_json(t, j.at("left"));
    const int r = node_from_json(t, j.at("right"));
    auto& n = t.nodes[static_cast<std::size_t>(index)];
    n.feature = f;
    n.threshold = th;
    n.left = l;
    n.right = r;
  }
  return index;
}

}  // namespace

ForestModel fit_forest(std::span<const FeatureRow> rows, const ForestParams& params, std::uint64_t seed,
                       int workers) {
  if (rows.size() < 5) throw DataError("predictor: need at least 5 training rows");
  if (params.trees < 1 || params.min_leaf < 1) throw ConfigError("predictor: trees and min_leaf must be >= 1");
  const std::size_t p = rows.front().x.size();
  if (p == 0) throw DataError("predictor: no features");
  for (const auto& r : rows) {
    if (r.x.size() != p) throw ContractError("predictor: inconsistent feature counts");
    if (!r.target || !std::isfinite(*r.target)) throw DataError("predictor: every training row needs a finite target");
    for (double v : r.x) {
      if (!std::isfinite(v)) throw DataError("predictor: non-finite feature value");
    }
  }
  ForestModel m;
  m.params = params;
  m.features = p;
  const std::size_t mtry = params.features_per_split > 0 ? std::min(params.features_per_split, p) : (p + 2) / 3;
  m.params.features_per_split = mtry;
  m.constant_target = std::all_of(rows.begin(), rows.end(), [&](const FeatureRow& r) { return *r.target == *rows.front().target; });
  m.seeds.resize(static_cast<std::size_t>(params.trees));
  for (std::size_t t = 0; t < m.seeds.size(); ++t) m.seeds[t] = derive_seed(seed, static_cast<std::uint64_t>(t));
  m.trees.resize(m.seeds.size());
  const auto n_trees = static_cast<std::int64_t>(m.seeds.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1)) if (workers > 1)
  for (std::int64_t t = 0; t < n_trees; ++t) {
    Rng rng(m.seeds[static_cast<std::size_t>(t)]);
    std::vector<std::size_t> samples(rows.size());
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      for (auto& s : samples) s = pick(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(rows, m.params, mtry, Rng(rng()));
    m.trees[static_cast<std::size_t>(t)] = builder.build(std::move(samples));
  }
  return m;
}

nlohmann::ordered_json ForestModel::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = "random_forest_regressor";
  j["features"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  if (features != kFeatureNames.size()) j["features"] = features;
  j["params"] = {{"trees", params.trees},
                 {"max_depth", params.max_depth},
                 {"min_leaf", params.min_leaf},
                 {"features_per_split", params.features_per_split},
                 {"bootstrap", params.bootstrap}};
  j["constant_target"] = constant_target;
  j["seeds"] = seeds;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : trees) arr.push_back(node_json(t, 0));
  j["trees"] = std::move(arr);
  return j;
}

ForestModel ForestModel::from_json(const nlohmann::json& j) {
  ForestModel m;
  try {
    const auto& f = j.at("features");
    m.features = f.is_array() ? f.size() : f.get<std::size_t>();
    const auto& p = j.at("params");
    m.params.trees = p.at("trees").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.min_leaf = p.at("min_leaf").get<std::size_t>();
    m.params.features_per_split = p.at("features_per_split").get<std::size_t>();
    m.params.bootstrap = p.at("bootstrap").get<bool>();
    m.constant_target = j.at("constant_target").get<bool>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      node_from_json(tree, t);
      m.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("predictor model: ") + e.what());
  }
  if (m.trees.empty()) throw FormatError("predictor model: no trees");
  return m;
}

std::vector<CurvePoint> learning_curve(std::span<const FeatureRow> rows, std::span<const std::size_t> train_sizes,
                                       int repeats, std::uint64_t seed, const ForestParams& params, int workers) {
  if (repeats < 1) throw ConfigError("learning curve: repeats must be >= 1");
  std::vector<CurvePoint> out;
  for (std::size_t size : train_sizes) {
    if (size >= rows.size()) {
      throw ConfigError("learning curve: train size " + std::to_string(size) + " must be below the row count " +
                        std::to_string(rows.size()));
    }
    CurvePoint pt;
    pt.train_size = size;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, "curve/" + std::to_string(size) + "/" + std::to_string(r)));
      std::vector<std::size_t> order(rows.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<FeatureRow> train, test;
      for (std::size_t i = 0; i < order.size(); ++i) (i < size ? train : test).push_back(rows[order[i]]);
      const auto model = fit_forest(train, params, rng(), workers);
      const auto pred = model.predict(test);
      std::vector<double> actual;
      for (const auto& t : test) actual.push_back(*t.target);
      const auto rho = spearman(pred, actual);
      if (rho) {
        pt.rhos.push_back(*rho);
      } else {
        ++pt.dropped;
      }
    }
    if (!pt.rhos.empty()) {
      const auto n = static_cast<double>(pt.rhos.size());
      pt.mean = std::accumulate(pt.rhos.begin(), pt.rhos.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : pt.rhos) ss += (v - pt.mean) * (v - pt.mean);
      pt.stddev = std::sqrt(ss / n);
    } else {
      pt.mean = std::nan("");
      pt.stddev = std::nan("");
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace hytas
