#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hytas/proxies.hpp"

namespace hytas {

// Shortest text that parses back to the same double; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double v);
double parse_number(std::string_view text);

inline constexpr std::array<const char*, 10> kFixedColumns{
    "id", "depth", "embed_dim", "mean_heads", "mean_mlp_ratio", "sum_head_dim", "sum_mlp_dim",
    "formula_ms", "exact_params", "flops",
};

struct ScoreRow {
  std::string id;
  int depth = 0;
  int embed_dim = 0;
  double mean_heads = 0.0;
  double mean_mlp_ratio = 0.0;
  std::int64_t sum_head_dim = 0;
  std::int64_t sum_mlp_dim = 0;
  std::int64_t formula_ms = 0;
  std::int64_t exact_params = 0;
  std::int64_t flops = 0;
  // Every non-fixed numeric column by header name.
  std::map<std::string, double, std::less<>> values;
  std::string flags;
};

struct ScoreTable {
  std::vector<std::string> value_columns;  // header order after the fixed columns, before "flags"
  std::vector<ScoreRow> rows;

  bool has_column(std::string_view name) const;
  // Values of a fixed or value column in row order.
  std::vector<double> column(std::string_view name) const;
  // Proxy score columns present, in canonical proxy order.
  std::vector<ProxyId> proxies() const;
  std::vector<std::string> ids() const;
};

struct TableOptions {
  bool timing = true;
  bool module_split = false;
};

// Columns: fixed, one per proxy, time_<proxy> per proxy, optional <proxy>_{msa,mlp,origin,logarithm}, flags.
ScoreTable make_score_table(std::span<const ScoreRecord> records, std::span<const ProxyId> proxies,
                            const TableOptions& opts);

void write_score_csv(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_csv(const std::filesystem::path& path);

// Two-column id,<name> CSV of per-genotype targets.
std::map<std::string, double> read_targets_csv(const std::filesystem::path& path, std::string* column_name = nullptr);
void write_targets_csv(const std::filesystem::path& path, std::string_view column,
                       std::span<const std::string> ids, std::span<const double> values);

// Adds `name` to the table from an id-keyed map; throws DataError for ids without a target.
void join_targets(ScoreTable& table, const std::map<std::string, double>& targets, const std::string& name);

}  // namespace hytas
