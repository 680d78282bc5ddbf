#include "hytas/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "hytas/analysis.hpp"
#include "hytas/data_io.hpp"
#include "hytas/error.hpp"
#include "hytas/predictor.hpp"
#include "hytas/proxies.hpp"
#include "hytas/rng.hpp"
#include "hytas/score_table.hpp"
#include "hytas/search_space.hpp"

namespace hytas {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kToyTarget = "toy_oa";

struct CommonOptions {
  std::string out;
  std::uint64_t seed = 0;
  int workers = 0;
};

struct InputOptions {
  std::string input;
  int classes = 16;
  std::size_t patch = 1;
  std::size_t band_group = 10;
  std::size_t stride = 10;
  std::size_t batch_size = kDefaultBatchSize;
  std::string source = "input";

  TokenizerParams tokenizer() const { return {patch, band_group, stride}; }
};

int resolve_workers(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("HYTAS_WORKERS"); env && *env) {
    int v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 1) {
      throw UsageError("HYTAS_WORKERS must be a positive integer, got '" + std::string(s) + "'");
    }
    return v;
  }
  return 1;
}

IntRange parse_range(const std::string& text, const std::string& flag) {
  IntRange r;
  char sep1 = 0, sep2 = 0;
  std::istringstream in(text);
  if (!(in >> r.start >> sep1 >> r.stop >> sep2 >> r.step) || sep1 != ':' || sep2 != ':' || !in.eof()) {
    throw UsageError(flag + " expects start:stop:step, got '" + text + "'");
  }
  return r;
}

json range_json(const IntRange& r) { return json::array({r.start, r.stop, r.step}); }

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + out);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    json config, json outputs, json extra = json::object()) {
  json m;
  m["tool"] = "hytas";
  m["version"] = HYTAS_VERSION;
  m["command"] = command;
  m["args"] = args;
  m["config"] = std::move(config);
  m["outputs"] = std::move(outputs);
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(dir / "manifest.json", m);
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string("nan"); }

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  ~CsvWriter() = default;

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw DataError("write failed for " + path_.string());
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

// Score columns: everything numeric after the fixed block except timings and the target.
std::vector<std::string> score_columns(const ScoreTable& t, const std::string& target) {
  std::vector<std::string> out;
  for (const auto& c : t.value_columns) {
    if (c.rfind("time_", 0) == 0 || c == target) continue;
    out.push_back(c);
  }
  return out;
}

// Joins --targets and checks --target. Returns the target column name or "".
std::string attach_target(ScoreTable& table, const std::string& targets_path, const std::string& target_flag) {
  std::string name = target_flag;
  if (!targets_path.empty()) {
    std::string file_col;
    const auto targets = read_targets_csv(targets_path, &file_col);
    if (!name.empty() && name != file_col) {
      throw DataError("target column '" + name + "' not found in " + targets_path + " (it provides '" + file_col + "')");
    }
    name = file_col;
    join_targets(table, targets, name);
  }
  if (!name.empty() && !table.has_column(name)) throw DataError("missing target column '" + name + "'");
  return name;
}

void write_ranked(const fs::path& path, const RankedTable& rt) {
  CsvWriter csv(path);
  const std::string tgt = rt.target_name.empty() ? "target" : rt.target_name;
  csv.row({"proxy", "rho", "argmax_id", "argmax_ms", "proposed_" + tgt});
  for (const auto& p : rt.proxies) {
    csv.row({p.proxy, opt_number(p.rho), p.argmax_id, p.argmax_id.empty() ? "" : std::to_string(p.argmax_ms),
             opt_number(p.proposed_target)});
  }
  if (!rt.target_name.empty()) csv.row({"oracle", "", rt.oracle_id, "", opt_number(rt.oracle)});
}

json ranked_json(const RankedTable& rt) {
  json j;
  j["target"] = rt.target_name;
  j["rows"] = rt.rows;
  if (rt.oracle) {
    j["oracle"] = *rt.oracle;
    j["oracle_id"] = rt.oracle_id;
  }
  json proxies = json::array();
  for (const auto& p : rt.proxies) {
    json e;
    e["proxy"] = p.proxy;
    e["rho"] = p.rho ? json(*p.rho) : json(nullptr);
    e["argmax_id"] = p.argmax_id;
    e["proposed"] = p.proposed_target ? json(*p.proposed_target) : json(nullptr);
    proxies.push_back(std::move(e));
  }
  j["proxies"] = std::move(proxies);
  return j;
}

struct ResolvedInput {
  TokenGeometry geometry;
  TokenBatch batch;
  json config;
};

ResolvedInput resolve_input(const InputOptions& in, std::uint64_t seed) {
  ResolvedInput r;
  if (in.source != "input" && in.source != "random" && in.source != "ones") {
    throw UsageError("--source must be input, random or ones");
  }
  if (in.batch_size < 2) throw UsageError("--batch-size must be >= 2");
  const auto tp = in.tokenizer();
  r.config["source"] = in.source;
  r.config["classes"] = in.classes;
  r.config["batch_size"] = in.batch_size;
  r.config["tokenizer"] = {{"patch", in.patch}, {"band_group", in.band_group}, {"stride", in.stride}};
  if (in.source == "input") {
    if (in.input.empty()) throw UsageError("--input is required when --source is input");
    const auto spec = InputSpec::parse(in.input);
    const auto cube = resolve_cube(spec, in.classes, derive_seed(seed, "cube"));
    r.geometry = TokenGeometry{token_count(cube.bands, tp), token_width(tp), in.classes};
    r.batch = cube_batch(cube, tp, in.classes, derive_seed(seed, "batch"), in.batch_size);
    r.config["input"] = spec.str();
  } else {
    std::size_t bands = 200;
    if (!in.input.empty()) {
      const auto spec = InputSpec::parse(in.input);
      if (spec.kind != InputSpec::Kind::Synth) throw UsageError("--source random/ones takes only a synth: geometry");
      bands = spec.bands;
      r.config["input"] = spec.str();
    }
    r.geometry = TokenGeometry{token_count(bands, tp), token_width(tp), in.classes};
    r.batch = synth_batch(r.geometry, in.source == "random" ? Provenance::Random : Provenance::Ones,
                          derive_seed(seed, "batch"), in.batch_size);
  }
  r.geometry.validate();
  r.config["tokens"] = r.geometry.tokens;
  r.config["token_width"] = r.geometry.token_width;
  return r;
}

void add_input_options(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("--input", in.input, "cube:<path> or synth:<H>x<W>x<B>");
  cmd->add_option("--source", in.source, "batch source: input, random or ones")->capture_default_str();
  cmd->add_option("--classes", in.classes, "number of classes")->capture_default_str();
  cmd->add_option("--patch", in.patch, "spatial patch size")->capture_default_str();
  cmd->add_option("--band-group", in.band_group, "bands per token")->capture_default_str();
  cmd->add_option("--band-stride", in.stride, "band stride between tokens")->capture_default_str();
  cmd->add_option("--batch-size", in.batch_size, "scoring batch size")->capture_default_str();
}

// ---- sample ----

struct SampleArgs {
  CommonOptions common;
  std::size_t count = 2000;
  std::string depth, embed, heads, ratio;
};

void cmd_sample(const SampleArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.count == 0) throw UsageError("--count must be >= 1");
  SearchSpaceConfig cfg;
  if (!a.depth.empty()) cfg.depth = parse_range(a.depth, "--depth");
  if (!a.embed.empty()) cfg.embed_dim = parse_range(a.embed, "--embed-dim");
  if (!a.heads.empty()) cfg.num_heads = parse_range(a.heads, "--heads");
  if (!a.ratio.empty()) cfg.mlp_ratio = parse_range(a.ratio, "--mlp-ratio");
  cfg.sample_count = a.count;
  cfg.seed = a.common.seed;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto pop = sample_population(cfg);
  const auto dir = prepare_out(a.common.out);
  write_genotypes(dir / "genotypes.jsonl", pop);
  json config{{"count", cfg.sample_count},
              {"seed", cfg.seed},
              {"depth", range_json(cfg.depth)},
              {"embed_dim", range_json(cfg.embed_dim)},
              {"num_heads", range_json(cfg.num_heads)},
              {"mlp_ratio", range_json(cfg.mlp_ratio)}};
  write_manifest(dir, "sample", args, std::move(config), json::array({"genotypes.jsonl"}));
  out << "sampled " << pop.size() << " genotypes -> " << (dir / "genotypes.jsonl").string() << '\n';
}

// ---- score ----

struct ScoreArgs {
  CommonOptions common;
  InputOptions input;
  std::string genotypes;
  std::string proxies = "all";
  bool sign_removal = false;
  bool module_split = false;
  int decay_start = 6;
  bool no_timing = false;
};

void cmd_score(const ScoreArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto proxies = parse_proxy_list(a.proxies);
  const int workers = resolve_workers(a.common.workers);
  const auto pop = read_genotypes(a.genotypes);
  auto ri = resolve_input(a.input, a.common.seed);
  PopulationConfig cfg;
  cfg.proxies = proxies;
  cfg.options.sign_removal = a.sign_removal;
  cfg.options.module_split = a.module_split;
  cfg.options.decay_start = a.decay_start;
  try {
    cfg.options.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  cfg.geometry = ri.geometry;
  cfg.seed = a.common.seed;
  cfg.workers = workers;
  const auto records = score_population(pop, ri.batch, cfg);
  const auto table = make_score_table(records, proxies, TableOptions{!a.no_timing, a.module_split});
  const auto dir = prepare_out(a.common.out);
  write_score_csv(dir / "scores.csv", table);

  json names = json::array();
  for (ProxyId id : proxies) names.push_back(proxy_name(id));
  json config = ri.config;
  config["genotypes"] = a.genotypes;
  config["population"] = pop.size();
  config["seed"] = a.common.seed;
  config["proxies"] = names;
  config["sign_removal"] = a.sign_removal;
  config["module_split"] = a.module_split;
  config["decay_start"] = a.decay_start;
  config["batch_provenance"] = provenance_name(ri.batch.provenance);
  json extra = json::object();
  if (!a.no_timing) {
    json totals = json::object();
    for (ProxyId id : proxies) {
      double s = 0.0;
      for (const auto& r : records) s += r.seconds.at(id);
      totals[proxy_name(id)] = s;
    }
    extra["search_seconds"] = std::move(totals);
    extra["workers"] = workers;
  }
  write_manifest(dir, "score", args, std::move(config), json::array({"scores.csv"}), std::move(extra));
  std::size_t flagged = 0;
  for (const auto& r : records) flagged += r.flags.empty() ? 0 : 1;
  out << "scored " << records.size() << " genotypes x " << proxies.size() << " proxies (" << flagged
      << " flagged) -> " << (dir / "scores.csv").string() << '\n';
}

// ---- rank ----

struct RankArgs {
  CommonOptions common;
  std::string scores, targets, target;
};

void cmd_rank(const RankArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto table = read_score_csv(a.scores);
  const auto target = attach_target(table, a.targets, a.target);
  const auto cols = score_columns(table, target);
  const auto rt = rank_table(table, cols, target);
  const auto dir = prepare_out(a.common.out);
  write_ranked(dir / "ranked.csv", rt);
  json config{{"scores", a.scores}, {"targets", a.targets}, {"target", target}};
  write_manifest(dir, "rank", args, std::move(config), json::array({"ranked.csv"}));
  out << "ranked " << cols.size() << " score columns over " << table.rows.size() << " genotypes\n";
}

// ---- analyze ----

struct AnalyzeArgs {
  CommonOptions common;
  InputOptions input;
  std::string scores, targets, target, genotypes;
  std::string sensitivity_proxies = "snip,gradnorm";
  double bucket_width = 5e6;
  bool buckets = false;
  bool seed_given = false;
};

void cmd_analyze(const AnalyzeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto table = read_score_csv(a.scores);
  const auto target = attach_target(table, a.targets, a.target);
  if (a.buckets && target.empty()) {
    throw DataError("bucket analysis needs a target column; pass --targets or --target");
  }
  const auto cols = score_columns(table, target);
  const auto dir = prepare_out(a.common.out);
  json outputs = json::array();
  json report;
  report["rows"] = table.rows.size();
  report["score_columns"] = cols;
  report["target"] = target.empty() ? json(nullptr) : json(target);
  if (target == kToyTarget) {
    report["target_kind"] = "TOY";
    report["oracle_note"] = "oracle is the maximum over toy-trained networks only";
  }

  const auto fc = factor_correlation(table, cols, target);
  {
    CsvWriter csv(dir / "factor_correlation.csv");
    std::vector<std::string> header{"column"};
    header.insert(header.end(), fc.cols.begin(), fc.cols.end());
    csv.row(header);
    for (std::size_t r = 0; r < fc.rows.size(); ++r) {
      std::vector<std::string> cells{fc.rows[r]};
      for (std::size_t c = 0; c < fc.cols.size(); ++c) cells.push_back(opt_number(fc.at(r, c)));
      csv.row(cells);
    }
    outputs.push_back("factor_correlation.csv");
  }

  if (!target.empty()) {
    const auto rt = rank_table(table, cols, target);
    write_ranked(dir / "ranked.csv", rt);
    outputs.push_back("ranked.csv");
    report["ranking"] = ranked_json(rt);

    double max_ms = 0.0;
    for (const auto& r : table.rows) max_ms = std::max(max_ms, static_cast<double>(r.formula_ms));
    const auto edges = default_bucket_edges(max_ms, a.bucket_width);
    const auto buckets = bucket_analysis(table, cols, target, edges);
    CsvWriter csv(dir / "bucket_analysis.csv");
    csv.row({"bucket_lo", "bucket_hi", "rows", "sparse", "proxy", "rho", "argmax_id", "proposed_" + target,
             "oracle", "oracle_id"});
    for (const auto& b : buckets) {
      for (const auto& p : b.ranking.proxies) {
        csv.row({format_number(b.lo), format_number(b.hi), std::to_string(b.rows), b.sparse ? "1" : "0", p.proxy,
                 opt_number(p.rho), p.argmax_id, opt_number(p.proposed_target), opt_number(b.ranking.oracle),
                 b.ranking.oracle_id});
      }
    }
    outputs.push_back("bucket_analysis.csv");
  }

  json config{{"scores", a.scores}, {"targets", a.targets}, {"target", target}, {"bucket_width", a.bucket_width}};
  if (!a.genotypes.empty()) {
    if (!a.seed_given) throw UsageError("--seed is required for the sensitivity analysis");
    const auto pop = read_genotypes(a.genotypes);
    const auto ri = resolve_input(a.input, a.common.seed);
    const auto random = synth_batch(ri.geometry, Provenance::Random, derive_seed(a.common.seed, "random"),
                                    a.input.batch_size);
    PopulationConfig pc;
    pc.proxies = parse_proxy_list(a.sensitivity_proxies);
    pc.geometry = ri.geometry;
    pc.seed = a.common.seed;
    pc.workers = resolve_workers(a.common.workers);
    const auto rows = sensitivity_random_input(pop, ri.batch, random, pc);
    CsvWriter csv(dir / "sensitivity.csv");
    csv.row({"proxy", "rho", "argmax_a", "argmax_b", "argmax_agree"});
    json sens = json::array();
    for (const auto& r : rows) {
      csv.row({proxy_name(r.proxy), opt_number(r.rho), r.argmax_a, r.argmax_b, r.argmax_agree ? "1" : "0"});
      sens.push_back({{"proxy", proxy_name(r.proxy)},
                      {"rho", r.rho ? json(*r.rho) : json(nullptr)},
                      {"argmax_agree", r.argmax_agree}});
    }
    report["sensitivity"] = std::move(sens);
    outputs.push_back("sensitivity.csv");
    json sc = ri.config;
    sc["genotypes"] = a.genotypes;
    sc["seed"] = a.common.seed;
    sc["proxies"] = a.sensitivity_proxies;
    sc["batch_a"] = provenance_name(ri.batch.provenance);
    sc["batch_b"] = provenance_name(Provenance::Random);
    config["sensitivity"] = std::move(sc);
  }
  write_json(dir / "report.json", report);
  outputs.push_back("report.json");
  write_manifest(dir, "analyze", args, std::move(config), std::move(outputs));
  out << "analyzed " << table.rows.size() << " genotypes" << (target.empty() ? " (no target column)" : "")
      << " -> " << dir.string() << '\n';
}

// ---- predict ----

struct PredictArgs {
  CommonOptions common;
  std::string scores, targets, target;
  std::vector<std::size_t> train_sizes{10, 20, 50, 100};
  int repeats = 5;
  int trees = 100;
};

void cmd_predict(const PredictArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto table = read_score_csv(a.scores);
  const auto target = attach_target(table, a.targets, a.target);
  if (target.empty()) throw DataError("predict needs a target column; pass --targets or --target");
  const int workers = resolve_workers(a.common.workers);
  const auto rows = feature_rows(table, target);
  ForestParams params;
  params.trees = a.trees;
  const auto curve = learning_curve(rows, a.train_sizes, a.repeats, derive_seed(a.common.seed, "curve"), params,
                                    workers);
  const auto model = fit_forest(rows, params, derive_seed(a.common.seed, "model"), workers);
  const auto pred = model.predict(rows);

  const auto dir = prepare_out(a.common.out);
  {
    CsvWriter csv(dir / "learning_curve.csv");
    csv.row({"train_size", "mean_rho", "std_rho", "kept", "dropped"});
    for (const auto& p : curve) {
      csv.row({std::to_string(p.train_size), format_number(p.mean), format_number(p.stddev),
               std::to_string(p.rhos.size()), std::to_string(p.dropped)});
    }
  }
  {
    CsvWriter csv(dir / "learning_curve_runs.csv");
    csv.row({"train_size", "repeat", "rho"});
    for (const auto& p : curve) {
      for (std::size_t r = 0; r < p.rhos.size(); ++r) {
        csv.row({std::to_string(p.train_size), std::to_string(r), format_number(p.rhos[r])});
      }
    }
  }
  {
    CsvWriter csv(dir / "predictions.csv");
    csv.row({"id", "predicted", target});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      csv.row({table.rows[i].id, format_number(pred[i]), format_number(*rows[i].target)});
    }
  }
  auto mj = model.to_json();
  mj["target"] = target;
  mj["seed"] = a.common.seed;
  write_json(dir / "model.json", mj);
  json config{{"scores", a.scores}, {"targets", a.targets}, {"target", target}, {"seed", a.common.seed},
              {"train_sizes", a.train_sizes}, {"repeats", a.repeats}, {"trees", a.trees}};
  write_manifest(dir, "predict", args, std::move(config),
                 json::array({"learning_curve.csv", "learning_curve_runs.csv", "predictions.csv", "model.json"}));
  for (const auto& p : curve) {
    out << "train " << p.train_size << ": rho " << format_number(p.mean) << " +- " << format_number(p.stddev) << '\n';
  }
}

// ---- report ----

struct ReportArgs {
  CommonOptions common;
  InputOptions input;
  std::string genotypes, scores;
  int epochs = 3;
  double lr = 0.05;
  std::size_t train_samples = 512;
  std::size_t test_samples = 256;
  int toy_classes = 4;
  double separation = 0.6;
};

void cmd_report(const ReportArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto table = read_score_csv(a.scores);
  const auto pop = read_genotypes(a.genotypes);
  std::map<std::string, const Genotype*> by_id;
  for (const auto& g : pop) by_id[g.id] = &g;
  for (const auto& r : table.rows) {
    if (!by_id.count(r.id)) throw DataError("genotype " + r.id + " from the score table is not in " + a.genotypes);
  }
  const int workers = resolve_workers(a.common.workers);
  std::size_t bands = 200;
  if (!a.input.input.empty()) bands = InputSpec::parse(a.input.input).bands;
  if (bands == 0) bands = resolve_cube(InputSpec::parse(a.input.input), a.input.classes, 0).bands;
  const TokenGeometry geom{token_count(bands, a.input.tokenizer()), token_width(a.input.tokenizer()), a.input.classes};
  geom.validate();
  const auto task = make_toy_task(geom, a.toy_classes, a.train_samples, a.test_samples, a.separation,
                                  derive_seed(a.common.seed, "toy-task"));
  const auto ids = table.ids();
  std::vector<double> acc(ids.size());
  std::vector<std::string> errors(ids.size());
  const auto n = static_cast<std::int64_t>(ids.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const Genotype& g = *by_id.at(ids[static_cast<std::size_t>(i)]);
    try {
      auto net = build(g, geom, derive_seed(a.common.seed, g.id));
      ToyTrainConfig tc{a.epochs, a.lr, 32, derive_seed(a.common.seed, g.id + "/toy")};
      acc[static_cast<std::size_t>(i)] = toy_train(net, task, tc).accuracy;
    } catch (const Error& e) {
      acc[static_cast<std::size_t>(i)] = std::nan("");
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  const auto dir = prepare_out(a.common.out);
  write_targets_csv(dir / "targets.csv", kToyTarget, ids, acc);
  std::map<std::string, double> targets;
  for (std::size_t i = 0; i < ids.size(); ++i) targets[ids[i]] = acc[i];
  join_targets(table, targets, kToyTarget);
  const auto cols = score_columns(table, kToyTarget);
  const auto rt = rank_table(table, cols, kToyTarget);
  write_ranked(dir / "ranked.csv", rt);

  json report;
  report["target_kind"] = "TOY";
  report["note"] = "toy accuracies from a synthetic token task; not real overall accuracy";
  report["oracle_note"] = "oracle is the maximum over toy-trained networks only";
  report["ranking"] = ranked_json(rt);
  json failures = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!errors[i].empty()) failures.push_back({{"id", ids[i]}, {"error", errors[i]}});
  }
  report["training_failures"] = std::move(failures);
  write_json(dir / "report.json", report);
  json config{{"scores", a.scores},       {"genotypes", a.genotypes},     {"seed", a.common.seed},
              {"epochs", a.epochs},       {"lr", a.lr},                   {"train_samples", a.train_samples},
              {"test_samples", a.test_samples}, {"toy_classes", a.toy_classes}, {"separation", a.separation},
              {"tokens", geom.tokens},    {"token_width", geom.token_width}, {"classes", geom.num_classes}};
  write_manifest(dir, "report", args, std::move(config), json::array({"targets.csv", "ranked.csv", "report.json"}));
  out << "toy-trained " << ids.size() << " genotypes (TOY target '" << kToyTarget << "') -> " << dir.string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hytas: training-free transformer architecture search", "hytas"};
  app.set_version_flag("--version", std::string(HYTAS_VERSION));
  app.require_subcommand(1);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "sample genotypes from the search space");
  sample->add_option("--count", sa.count, "population size")->capture_default_str();
  sample->add_option("--seed", sa.common.seed, "sampling seed")->required();
  sample->add_option("--out", sa.common.out, "output directory")->required();
  sample->add_option("--depth", sa.depth, "depth range start:stop:step");
  sample->add_option("--embed-dim", sa.embed, "embedding range start:stop:step");
  sample->add_option("--heads", sa.heads, "head-count range start:stop:step");
  sample->add_option("--mlp-ratio", sa.ratio, "MLP ratio range start:stop:step");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "score a population with zero-cost proxies");
  score->add_option("--genotypes", sc.genotypes, "genotypes.jsonl")->required();
  score->add_option("--proxies", sc.proxies, "comma list of proxy ids or 'all'")->capture_default_str();
  score->add_option("--seed", sc.common.seed, "initialization and batch seed")->required();
  score->add_option("--out", sc.common.out, "output directory")->required();
  score->add_option("--workers", sc.common.workers, "worker threads (default HYTAS_WORKERS or 1)");
  score->add_flag("--sign-removal", sc.sign_removal, "skip the absolute-value substitution");
  score->add_flag("--module-split", sc.module_split, "emit MSA/MLP sub-scores");
  score->add_option("--decay-start", sc.decay_start, "ZiCo++ decay start layer")->capture_default_str();
  score->add_flag("--no-timing", sc.no_timing, "omit wall-time columns");
  add_input_options(score, sc.input);

  RankArgs ra;
  auto* rank = app.add_subcommand("rank", "rank proxies against a target");
  rank->add_option("--scores", ra.scores, "scores.csv")->required();
  rank->add_option("--targets", ra.targets, "id,<target> CSV");
  rank->add_option("--target", ra.target, "target column name");
  rank->add_option("--out", ra.common.out, "output directory")->required();

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "factor, bucket and sensitivity analyses");
  analyze->add_option("--scores", an.scores, "scores.csv")->required();
  analyze->add_option("--targets", an.targets, "id,<target> CSV");
  analyze->add_option("--target", an.target, "target column name");
  analyze->add_option("--out", an.common.out, "output directory")->required();
  analyze->add_option("--bucket-width", an.bucket_width, "model-size bucket width")->capture_default_str();
  analyze->add_flag("--buckets", an.buckets, "require the bucket analysis");
  analyze->add_option("--genotypes", an.genotypes, "genotypes.jsonl for the sensitivity analysis");
  analyze->add_option("--sensitivity-proxies", an.sensitivity_proxies, "proxies for the sensitivity analysis")
      ->capture_default_str();
  auto* an_seed = analyze->add_option("--seed", an.common.seed, "seed for the sensitivity analysis");
  analyze->add_option("--workers", an.common.workers, "worker threads");
  add_input_options(analyze, an.input);

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "fit the proxy-fusion forest and its learning curve");
  predict->add_option("--scores", pr.scores, "scores.csv")->required();
  predict->add_option("--targets", pr.targets, "id,<target> CSV");
  predict->add_option("--target", pr.target, "target column name");
  predict->add_option("--train-sizes", pr.train_sizes, "learning-curve train sizes")->delimiter(',');
  predict->add_option("--repeats", pr.repeats, "repeats per train size")->capture_default_str();
  predict->add_option("--trees", pr.trees, "trees per forest")->capture_default_str();
  predict->add_option("--seed", pr.common.seed, "forest seed")->required();
  predict->add_option("--out", pr.common.out, "output directory")->required();
  predict->add_option("--workers", pr.common.workers, "worker threads");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "toy-train every genotype and rank proxies against TOY accuracy");
  report->add_option("--genotypes", rp.genotypes, "genotypes.jsonl")->required();
  report->add_option("--scores", rp.scores, "scores.csv")->required();
  report->add_option("--seed", rp.common.seed, "training seed")->required();
  report->add_option("--out", rp.common.out, "output directory")->required();
  report->add_option("--workers", rp.common.workers, "worker threads");
  report->add_option("--epochs", rp.epochs, "SGD epochs")->capture_default_str();
  report->add_option("--lr", rp.lr, "SGD learning rate")->capture_default_str();
  report->add_option("--train-samples", rp.train_samples, "toy training samples")->capture_default_str();
  report->add_option("--test-samples", rp.test_samples, "toy test samples")->capture_default_str();
  report->add_option("--toy-classes", rp.toy_classes, "toy task classes")->capture_default_str();
  report->add_option("--separation", rp.separation, "class prototype scale")->capture_default_str();
  add_input_options(report, rp.input);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << HYTAS_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*sample) cmd_sample(sa, args, out);
    if (*score) cmd_score(sc, args, out);
    if (*rank) cmd_rank(ra, args, out);
    if (*analyze) {
      an.seed_given = an_seed->count() > 0;
      cmd_analyze(an, args, out);
    }
    if (*predict) cmd_predict(pr, args, out);
    if (*report) cmd_report(rp, args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace hytas
