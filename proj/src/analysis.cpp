#include "hytas/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hytas/error.hpp"

namespace hytas {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("correlation: inputs differ in length");
  if (x.size() < 2) throw DimensionError("correlation: need at least 2 values");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: inputs differ in length");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("spearman: non-finite input");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::optional<std::size_t> argmax_row(std::span<const double> scores, std::span<const std::string> ids) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (!best || scores[i] > scores[*best] || (scores[i] == scores[*best] && ids[i] < ids[*best])) best = i;
  }
  return best;
}

namespace {

RankedTable rank_rows(const ScoreTable& table, std::span<const std::size_t> rows,
                      std::span<const std::string> score_columns, const std::string& target_column,
                      bool with_rho) {
  RankedTable out;
  out.target_name = target_column;
  out.rows = rows.size();
  std::vector<std::string> ids;
  std::vector<double> target;
  for (std::size_t r : rows) ids.push_back(table.rows[r].id);
  if (!target_column.empty()) {
    for (std::size_t r : rows) target.push_back(table.rows[r].values.at(target_column));
    if (const auto best = argmax_row(target, ids)) {
      out.oracle = target[*best];
      out.oracle_id = ids[*best];
    }
  }
  for (const auto& col : score_columns) {
    ProxyRanking pr;
    pr.proxy = col;
    std::vector<double> scores;
    for (std::size_t r : rows) scores.push_back(table.rows[r].values.at(col));
    if (const auto best = argmax_row(scores, ids)) {
      pr.argmax_id = ids[*best];
      pr.argmax_ms = table.rows[rows[*best]].formula_ms;
      if (!target.empty()) pr.proposed_target = target[*best];
    }
    if (with_rho && !target.empty()) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isfinite(scores[i]) && std::isfinite(target[i])) {
          xs.push_back(scores[i]);
          ys.push_back(target[i]);
        }
      }
      if (xs.size() >= 2) pr.rho = spearman(xs, ys);
    }
    out.proxies.push_back(std::move(pr));
  }
  return out;
}

}  // namespace

RankedTable rank_table(const ScoreTable& table, std::span<const std::string> score_columns,
                       const std::string& target_column) {
  for (const auto& c : score_columns) {
    if (!table.has_column(c)) throw DataError("rank: missing score column '" + c + "'");
  }
  if (!target_column.empty() && !table.has_column(target_column)) {
    throw DataError("rank: missing target column '" + target_column + "'");
  }
  std::vector<std::size_t> rows(table.rows.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rank_rows(table, rows, score_columns, target_column, true);
}

std::vector<double> default_bucket_edges(double max_ms, double width) {
  if (!(width > 0.0)) throw ConfigError("buckets: width must be positive");
  std::vector<double> edges{0.0};
  while (edges.back() <= max_ms) edges.push_back(edges.back() + width);
  return edges;
}

std::vector<BucketResult> bucket_analysis(const ScoreTable& table, std::span<const std::string> score_columns,
                                          const std::string& target_column, std::span<const double> edges) {
  if (target_column.empty() || !table.has_column(target_column)) {
    throw DataError("bucket analysis needs a target column" +
                    (target_column.empty() ? std::string() : " ('" + target_column + "' is missing)"));
  }
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw ConfigError("buckets: need at least two ascending edges");
  }
  for (const auto& r : table.rows) {
    const auto ms = static_cast<double>(r.formula_ms);
    if (ms < edges.front() || ms >= edges.back()) {
      throw ConfigError("buckets: model size " + format_number(ms) + " of " + r.id + " lies outside the edges");
    }
  }
  std::vector<BucketResult> out;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    BucketResult br;
    br.lo = edges[b];
    br.hi = edges[b + 1];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto ms = static_cast<double>(table.rows[i].formula_ms);
      if (ms >= br.lo && ms < br.hi) rows.push_back(i);
    }
    br.rows = rows.size();
    br.sparse = rows.size() < 3;
    br.ranking = rank_rows(table, rows, score_columns, target_column, !br.sparse);
    out.push_back(std::move(br));
  }
  return out;
}

CorrelationMatrix factor_correlation(const ScoreTable& table, std::span<const std::string> score_columns,
                                     const std::string& target_column) {
  if (table.rows.size() < 10) throw DataError("factor correlation needs at least 10 rows");
  CorrelationMatrix m;
  m.rows.assign(score_columns.begin(), score_columns.end());
  if (!target_column.empty()) m.rows.push_back(target_column);
  for (const char* f : kFactorNames) m.cols.emplace_back(f);
  for (const auto& rname : m.rows) {
    const auto values = table.column(rname);
    for (const auto& cname : m.cols) {
      const auto factor = table.column(cname);
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isfinite(values[i])) {
          xs.push_back(values[i]);
          ys.push_back(factor[i]);
        }
      }
      m.values.push_back(xs.size() >= 2 ? spearman(xs, ys) : std::nullopt);
    }
  }
  return m;
}

std::vector<SensitivityRow> sensitivity_random_input(std::span<const Genotype> genotypes, const TokenBatch& a,
                                                     const TokenBatch& b, const PopulationConfig& cfg) {
  const auto ra = score_population(genotypes, a, cfg);
  const auto rb = score_population(genotypes, b, cfg);
  std::vector<std::string> ids;
  for (const auto& g : genotypes) ids.push_back(g.id);
  std::vector<SensitivityRow> out;
  for (ProxyId id : cfg.proxies) {
    SensitivityRow row;
    row.proxy = id;
    std::vector<double> sa, sb, xa, xb;
    for (std::size_t i = 0; i < genotypes.size(); ++i) {
      sa.push_back(ra[i].scores.at(id));
      sb.push_back(rb[i].scores.at(id));
      if (std::isfinite(sa.back()) && std::isfinite(sb.back())) {
        xa.push_back(sa.back());
        xb.push_back(sb.back());
      }
    }
    if (xa.size() >= 2) row.rho = spearman(xa, xb);
    if (const auto i = argmax_row(sa, ids)) row.argmax_a = ids[*i];
    if (const auto i = argmax_row(sb, ids)) row.argmax_b = ids[*i];
    row.argmax_agree = !row.argmax_a.empty() && row.argmax_a == row.argmax_b;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace hytas
