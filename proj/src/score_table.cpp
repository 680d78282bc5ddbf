#include "hytas/score_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hytas/error.hpp"

namespace hytas {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::int64_t parse_int(std::string_view text, const std::string& what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("csv: bad integer '" + std::string(text) + "' in column " + what);
  }
  return v;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format number");
  return {buf, ptr};
}

double parse_number(std::string_view text) {
  if (text == "nan" || text == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw FormatError("csv: bad number '" + std::string(text) + "'");
  }
  return v;
}

bool ScoreTable::has_column(std::string_view name) const {
  if (std::find(kFixedColumns.begin(), kFixedColumns.end(), name) != kFixedColumns.end()) return name != "id";
  return std::find(value_columns.begin(), value_columns.end(), name) != value_columns.end();
}

std::vector<double> ScoreTable::column(std::string_view name) const {
  if (!has_column(name)) throw DataError("table has no numeric column '" + std::string(name) + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (name == "depth") out.push_back(r.depth);
    else if (name == "embed_dim") out.push_back(r.embed_dim);
    else if (name == "mean_heads") out.push_back(r.mean_heads);
    else if (name == "mean_mlp_ratio") out.push_back(r.mean_mlp_ratio);
    else if (name == "sum_head_dim") out.push_back(static_cast<double>(r.sum_head_dim));
    else if (name == "sum_mlp_dim") out.push_back(static_cast<double>(r.sum_mlp_dim));
    else if (name == "formula_ms") out.push_back(static_cast<double>(r.formula_ms));
    else if (name == "exact_params") out.push_back(static_cast<double>(r.exact_params));
    else if (name == "flops") out.push_back(static_cast<double>(r.flops));
    else out.push_back(r.values.find(name)->second);
  }
  return out;
}

std::vector<ProxyId> ScoreTable::proxies() const {
  std::vector<ProxyId> out;
  for (ProxyId id : kAllProxies) {
    if (std::find(value_columns.begin(), value_columns.end(), proxy_name(id)) != value_columns.end()) {
      out.push_back(id);
    }
  }
  return out;
}

std::vector<std::string> ScoreTable::ids() const {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.id);
  return out;
}

ScoreTable make_score_table(std::span<const ScoreRecord> records, std::span<const ProxyId> proxies,
                            const TableOptions& opts) {
  ScoreTable t;
  for (ProxyId id : proxies) t.value_columns.emplace_back(proxy_name(id));
  if (opts.timing) {
    for (ProxyId id : proxies) t.value_columns.push_back(std::string("time_") + proxy_name(id));
  }
  std::vector<ProxyId> split_ids;
  if (opts.module_split) {
    for (ProxyId id : proxies) {
      if (!supports_module_split(id)) continue;
      split_ids.push_back(id);
      for (const char* part : {"_msa", "_mlp", "_origin", "_logarithm"}) {
        t.value_columns.push_back(std::string(proxy_name(id)) + part);
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& rec : records) {
    const Genotype& g = rec.genotype;
    ScoreRow row;
    row.id = g.id;
    row.depth = g.depth;
    row.embed_dim = g.embed_dim;
    row.mean_heads = mean_heads(g);
    row.mean_mlp_ratio = mean_mlp_ratio(g);
    row.sum_head_dim = sum_head_dim(g);
    row.sum_mlp_dim = sum_mlp_dim(g);
    row.formula_ms = rec.formula_ms;
    row.exact_params = rec.exact_params;
    row.flops = rec.flops;
    for (ProxyId id : proxies) {
      const auto s = rec.scores.find(id);
      row.values[proxy_name(id)] = s == rec.scores.end() ? nan : s->second;
      if (opts.timing) {
        const auto tm = rec.seconds.find(id);
        row.values[std::string("time_") + proxy_name(id)] = tm == rec.seconds.end() ? nan : tm->second;
      }
    }
    for (ProxyId id : split_ids) {
      const std::string base = proxy_name(id);
      const auto sp = rec.splits.find(id);
      const bool have = sp != rec.splits.end();
      row.values[base + "_msa"] = have ? sp->second.msa : nan;
      row.values[base + "_mlp"] = have ? sp->second.mlp : nan;
      row.values[base + "_origin"] = have ? sp->second.origin : nan;
      row.values[base + "_logarithm"] = have && sp->second.logarithm ? *sp->second.logarithm : nan;
    }
    std::string flags;
    for (const auto& f : rec.flags) flags += (flags.empty() ? "" : ";") + sanitize(f);
    row.flags = flags;
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_score_csv(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const char* c : kFixedColumns) out << c << ',';
  for (const auto& c : table.value_columns) out << c << ',';
  out << "flags\n";
  for (const auto& r : table.rows) {
    out << r.id << ',' << r.depth << ',' << r.embed_dim << ',' << format_number(r.mean_heads) << ','
        << format_number(r.mean_mlp_ratio) << ',' << r.sum_head_dim << ',' << r.sum_mlp_dim << ',' << r.formula_ms
        << ',' << r.exact_params << ',' << r.flops << ',';
    for (const auto& c : table.value_columns) out << format_number(r.values.at(c)) << ',';
    out << sanitize(r.flags) << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

ScoreTable read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty file " + path.string());
  const auto header = split_line(line);
  if (header.size() < kFixedColumns.size() + 1 || header.back() != "flags" ||
      !std::equal(kFixedColumns.begin(), kFixedColumns.end(), header.begin())) {
    throw FormatError("csv: " + path.string() + " is not a score table (unexpected header)");
  }
  ScoreTable t;
  t.value_columns.assign(header.begin() + kFixedColumns.size(), header.end() - 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    }
    ScoreRow r;
    r.id = cells[0];
    r.depth = static_cast<int>(parse_int(cells[1], "depth"));
    r.embed_dim = static_cast<int>(parse_int(cells[2], "embed_dim"));
    r.mean_heads = parse_number(cells[3]);
    r.mean_mlp_ratio = parse_number(cells[4]);
    r.sum_head_dim = parse_int(cells[5], "sum_head_dim");
    r.sum_mlp_dim = parse_int(cells[6], "sum_mlp_dim");
    r.formula_ms = parse_int(cells[7], "formula_ms");
    r.exact_params = parse_int(cells[8], "exact_params");
    r.flops = parse_int(cells[9], "flops");
    for (std::size_t c = 0; c < t.value_columns.size(); ++c) {
      r.values[t.value_columns[c]] = parse_number(cells[kFixedColumns.size() + c]);
    }
    r.flags = cells.back();
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::map<std::string, double> read_targets_csv(const std::filesystem::path& path, std::string* column_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty file " + path.string());
  const auto header = split_line(line);
  if (header.size() != 2 || header[0] != "id") {
    throw FormatError("csv: target file " + path.string() + " must have header id,<target>");
  }
  if (column_name) *column_name = header[1];
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 2) throw FormatError("csv: target rows need exactly two cells");
    out[cells[0]] = parse_number(cells[1]);
  }
  return out;
}

void write_targets_csv(const std::filesystem::path& path, std::string_view column, std::span<const std::string> ids,
                       std::span<const double> values) {
  if (ids.size() != values.size()) throw ContractError("targets: ids and values differ in length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id," << column << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << format_number(values[i]) << '\n';
}

void join_targets(ScoreTable& table, const std::map<std::string, double>& targets, const std::string& name) {
  if (table.has_column(name)) throw DataError("table already has a column named '" + name + "'");
  for (auto& r : table.rows) {
    const auto it = targets.find(r.id);
    if (it == targets.end()) throw DataError("no target '" + name + "' for genotype " + r.id);
    r.values[name] = it->second;
  }
  table.value_columns.push_back(name);
}

}  // namespace hytas
