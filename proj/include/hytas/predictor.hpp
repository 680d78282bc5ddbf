#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hytas/score_table.hpp"

namespace hytas {

inline constexpr std::array<const char*, 10> kFeatureNames{
    "depth", "embed_dim", "mean_heads", "mean_mlp_ratio", "snip", "gradnorm", "synflow", "dss", "zico", "fisher",
};

struct FeatureRow {
  std::vector<double> x;
  std::optional<double> target;
};

// Features in kFeatureNames order; the target column is attached when named.
std::vector<FeatureRow> feature_rows(const ScoreTable& table, const std::string& target_column = {});

struct ForestParams {
  int trees = 100;
  int max_depth = 0;  // 0 = unbounded
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = ceil(features / 3)
  bool bootstrap = true;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> x) const;
};

struct ForestModel {
  ForestParams params;
  std::size_t features = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<RegressionTree> trees;
  bool constant_target = false;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(std::span<const FeatureRow> rows) const;

  nlohmann::ordered_json to_json() const;
  static ForestModel from_json(const nlohmann::json& j);
};

ForestModel fit_forest(std::span<const FeatureRow> rows, const ForestParams& params, std::uint64_t seed,
                       int workers = 1);

struct CurvePoint {
  std::size_t train_size = 0;
  std::vector<double> rhos;
  std::size_t dropped = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

std::vector<CurvePoint> learning_curve(std::span<const FeatureRow> rows, std::span<const std::size_t> train_sizes,
                                       int repeats, std::uint64_t seed, const ForestParams& params = {},
                                       int workers = 1);

}  // namespace hytas
