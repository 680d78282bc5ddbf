#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hytas/data_io.hpp"
#include "hytas/model.hpp"
#include "hytas/proxies.hpp"
#include "hytas/score_table.hpp"

namespace hytas {

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of average ranks. nullopt when either input is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

// Row with the highest finite score, ties to the smallest id. nullopt when no score is finite.
std::optional<std::size_t> argmax_row(std::span<const double> scores, std::span<const std::string> ids);

struct ProxyRanking {
  std::string proxy;
  std::optional<double> rho;  // vs. target, rows with finite scores only
  std::string argmax_id;
  std::int64_t argmax_ms = 0;
  std::optional<double> proposed_target;
};

struct RankedTable {
  std::string target_name;  // empty when no target column
  std::size_t rows = 0;
  std::vector<ProxyRanking> proxies;
  std::optional<double> oracle;
  std::string oracle_id;
};

RankedTable rank_table(const ScoreTable& table, std::span<const std::string> score_columns,
                       const std::string& target_column = {});

struct BucketResult {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t rows = 0;
  bool sparse = false;  // fewer than 3 rows; rho omitted
  RankedTable ranking;
};

// Bins [0, w), [w, 2w), ... covering max_ms.
std::vector<double> default_bucket_edges(double max_ms, double width = 5e6);

std::vector<BucketResult> bucket_analysis(const ScoreTable& table, std::span<const std::string> score_columns,
                                          const std::string& target_column, std::span<const double> edges);

inline constexpr std::array<const char*, 7> kFactorNames{
    "depth", "embed_dim", "mean_heads", "mean_mlp_ratio", "sum_head_dim", "sum_mlp_dim", "formula_ms",
};

struct CorrelationMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::optional<double>> values;  // row-major

  std::optional<double> at(std::size_t r, std::size_t c) const { return values[r * cols.size() + c]; }
};

// Spearman of every score column (and target when given) against every derived factor. Needs >= 10 rows.
CorrelationMatrix factor_correlation(const ScoreTable& table, std::span<const std::string> score_columns,
                                     const std::string& target_column = {});

struct SensitivityRow {
  ProxyId proxy;
  std::optional<double> rho;
  std::string argmax_a;
  std::string argmax_b;
  bool argmax_agree = false;
};

// Scores every genotype under two batches and compares the per-proxy score vectors.
std::vector<SensitivityRow> sensitivity_random_input(std::span<const Genotype> genotypes, const TokenBatch& a,
                                                     const TokenBatch& b, const PopulationConfig& cfg);

struct ToyTask {
  Tensor train_x;
  std::vector<int> train_y;
  Tensor test_x;
  std::vector<int> test_y;
};

// Gaussian class prototypes in token space plus isotropic noise.
ToyTask make_toy_task(const TokenGeometry& geom, int classes, std::size_t train_size, std::size_t test_size,
                      double separation, std::uint64_t seed);

struct ToyTrainConfig {
  int epochs = 3;
  double lr = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct ToyResult {
  double accuracy = 0.0;
  double baseline_accuracy = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t steps = 0;
};

double accuracy(const NetworkInstance& net, const Tensor& x, std::span<const int> y);
double mean_loss(const NetworkInstance& net, const Tensor& x, std::span<const int> y);

// Plain minibatch SGD on cross-entropy; updates `net` in place.
ToyResult toy_train(NetworkInstance& net, const ToyTask& task, const ToyTrainConfig& cfg);

}  // namespace hytas
