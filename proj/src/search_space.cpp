#include "hytas/search_space.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hytas/error.hpp"
#include "hytas/rng.hpp"

namespace hytas {

std::vector<int> IntRange::values() const {
  std::vector<int> out;
  if (step <= 0) return out;
  for (int v = start; v <= stop; v += step) out.push_back(v);
  return out;
}

bool IntRange::contains(int v) const {
  return step > 0 && v >= start && v <= stop && (v - start) % step == 0;
}

namespace {

void check_range(const char* name, const IntRange& r, const IntRange& bounds) {
  if (r.step <= 0 || r.start > r.stop) {
    throw ConfigError(std::string("search space: empty range for ") + name);
  }
  for (int v : r.values()) {
    if (!bounds.contains(v)) {
      throw ConfigError(std::string("search space: ") + name + " value " + std::to_string(v) +
                        " outside the supported grid");
    }
  }
}

template <typename Rng>
int draw(Rng& rng, const std::vector<int>& choices) {
  std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
  return choices[pick(rng)];
}

std::int64_t rounded_mean(const std::vector<int>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return std::llround(m);
}

}  // namespace

void SearchSpaceConfig::validate() const {
  const SearchSpaceConfig bounds_cfg{};
  check_range("depth", depth, bounds_cfg.depth);
  check_range("embed_dim", embed_dim, bounds_cfg.embed_dim);
  check_range("num_heads", num_heads, bounds_cfg.num_heads);
  check_range("mlp_ratio", mlp_ratio, bounds_cfg.mlp_ratio);
}

void validate_genotype(const Genotype& g, const SearchSpaceConfig& space) {
  auto fail = [&](const std::string& what) { throw ConfigError("genotype: " + what); };
  if (!space.depth.contains(g.depth)) fail("depth " + std::to_string(g.depth) + " outside search space");
  if (!space.embed_dim.contains(g.embed_dim)) fail("embed_dim " + std::to_string(g.embed_dim) + " outside search space");
  if (g.num_heads.size() != static_cast<std::size_t>(g.depth) || g.mlp_ratio.size() != static_cast<std::size_t>(g.depth)) {
    fail("per-block lists must have depth entries");
  }
  for (int h : g.num_heads) {
    if (!space.num_heads.contains(h)) fail("num_heads entry " + std::to_string(h) + " outside search space");
  }
  for (int r : g.mlp_ratio) {
    if (!space.mlp_ratio.contains(r)) fail("mlp_ratio entry " + std::to_string(r) + " outside search space");
  }
}

std::string canonical_json(const Genotype& g) {
  nlohmann::ordered_json j;
  j["depth"] = g.depth;
  j["embed_dim"] = g.embed_dim;
  j["num_heads"] = g.num_heads;
  j["mlp_ratio"] = g.mlp_ratio;
  return j.dump();
}

std::string genotype_id(const Genotype& g) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(g))));
  return buf;
}

Genotype make_genotype(int depth, int embed_dim, std::vector<int> num_heads, std::vector<int> mlp_ratio) {
  Genotype g{depth, embed_dim, std::move(num_heads), std::move(mlp_ratio), {}};
  validate_genotype(g);
  g.id = genotype_id(g);
  return g;
}

std::vector<Genotype> sample_population(const SearchSpaceConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto depths = cfg.depth.values();
  const auto dims = cfg.embed_dim.values();
  const auto heads = cfg.num_heads.values();
  const auto ratios = cfg.mlp_ratio.values();
  std::vector<Genotype> out;
  out.reserve(cfg.sample_count);
  for (std::size_t i = 0; i < cfg.sample_count; ++i) {
    Genotype g;
    g.depth = draw(rng, depths);
    g.embed_dim = draw(rng, dims);
    for (int b = 0; b < g.depth; ++b) {
      g.num_heads.push_back(draw(rng, heads));
      g.mlp_ratio.push_back(draw(rng, ratios));
    }
    g.id = genotype_id(g);
    out.push_back(std::move(g));
  }
  return out;
}

int layer_count(const Genotype& g) { return 4 * g.depth + 2; }

double mean_heads(const Genotype& g) {
  return std::accumulate(g.num_heads.begin(), g.num_heads.end(), 0.0) / static_cast<double>(g.num_heads.size());
}

double mean_mlp_ratio(const Genotype& g) {
  return std::accumulate(g.mlp_ratio.begin(), g.mlp_ratio.end(), 0.0) / static_cast<double>(g.mlp_ratio.size());
}

int sum_head_dim(const Genotype& g) { return kHeadDim * std::accumulate(g.num_heads.begin(), g.num_heads.end(), 0); }

int sum_mlp_dim(const Genotype& g) {
  return g.embed_dim * std::accumulate(g.mlp_ratio.begin(), g.mlp_ratio.end(), 0);
}

std::int64_t model_size_formula(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d,
                                std::int64_t num_classes) {
  const std::int64_t per_block = 4 * d + 256 * c * d + 192 * c + 5 * d + 7680 + 2 * b * d * d + b * d + d;
  return 1539 * d + a * per_block + 2 * d + num_classes * (d + 1);
}

std::int64_t model_size_formula(const Genotype& g, int num_classes) {
  return model_size_formula(g.depth, rounded_mean(g.mlp_ratio), rounded_mean(g.num_heads), g.embed_dim, num_classes);
}

void TokenGeometry::validate() const {
  if (tokens == 0 || token_width == 0) throw ConfigError("token geometry: tokens and token width must be positive");
  if (num_classes < 2) throw ConfigError("token geometry: need at least 2 classes");
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Embed: return "EMBED";
    case LayerKind::MsaQkv: return "MSA_QKV";
    case LayerKind::MsaProj: return "MSA_PROJ";
    case LayerKind::MlpFc1: return "MLP_FC1";
    case LayerKind::MlpFc2: return "MLP_FC2";
    case LayerKind::Head: return "HEAD";
  }
  return "?";
}

bool is_msa(LayerKind kind) { return kind == LayerKind::MsaQkv || kind == LayerKind::MsaProj; }
bool is_mlp(LayerKind kind) { return kind == LayerKind::MlpFc1 || kind == LayerKind::MlpFc2; }

std::vector<LayerSpec> layer_layout(const Genotype& g) {
  std::vector<LayerSpec> out;
  out.push_back({LayerKind::Embed, std::nullopt});
  for (int b = 1; b <= g.depth; ++b) {
    out.push_back({LayerKind::MsaQkv, b});
    out.push_back({LayerKind::MsaProj, b});
    out.push_back({LayerKind::MlpFc1, b});
    out.push_back({LayerKind::MlpFc2, b});
  }
  out.push_back({LayerKind::Head, std::nullopt});
  return out;
}

std::vector<ParamSpec> parameter_layout(const Genotype& g, const TokenGeometry& geom) {
  const std::size_t d = static_cast<std::size_t>(g.embed_dim);
  std::vector<ParamSpec> out;
  out.push_back({"embed.weight", {d, geom.token_width}, 0, ParamRole::Weight});
  out.push_back({"embed.bias", {d}, 0, ParamRole::Bias});
  out.push_back({"embed.cls_token", {1, d}, 0, ParamRole::Embedding});
  out.push_back({"embed.pos", {geom.tokens + 1, d}, 0, ParamRole::Embedding});
  std::size_t entry = 1;
  for (int b = 0; b < g.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b + 1) + ".";
    const std::size_t inner = static_cast<std::size_t>(kHeadDim * g.num_heads[b]);
    const std::size_t hidden = static_cast<std::size_t>(g.mlp_ratio[b]) * d;
    out.push_back({p + "norm1.gain", {d}, entry, ParamRole::Gain});
    out.push_back({p + "norm1.bias", {d}, entry, ParamRole::Bias});
    out.push_back({p + "attn.qkv.weight", {3 * inner, d}, entry, ParamRole::Weight});
    out.push_back({p + "attn.qkv.bias", {3 * inner}, entry, ParamRole::Bias});
    ++entry;
    out.push_back({p + "attn.proj.weight", {d, inner}, entry, ParamRole::Weight});
    out.push_back({p + "attn.proj.bias", {d}, entry, ParamRole::Bias});
    ++entry;
    out.push_back({p + "norm2.gain", {d}, entry, ParamRole::Gain});
    out.push_back({p + "norm2.bias", {d}, entry, ParamRole::Bias});
    out.push_back({p + "mlp.fc1.weight", {hidden, d}, entry, ParamRole::Weight});
    out.push_back({p + "mlp.fc1.bias", {hidden}, entry, ParamRole::Bias});
    ++entry;
    out.push_back({p + "mlp.fc2.weight", {d, hidden}, entry, ParamRole::Weight});
    out.push_back({p + "mlp.fc2.bias", {d}, entry, ParamRole::Bias});
    ++entry;
  }
  const std::size_t classes = static_cast<std::size_t>(geom.num_classes);
  out.push_back({"norm.gain", {d}, entry, ParamRole::Gain});
  out.push_back({"norm.bias", {d}, entry, ParamRole::Bias});
  out.push_back({"head.weight", {classes, d}, entry, ParamRole::Weight});
  out.push_back({"head.bias", {classes}, entry, ParamRole::Bias});
  return out;
}

std::int64_t exact_param_count(const Genotype& g, const TokenGeometry& geom) {
  std::int64_t total = 0;
  for (const auto& spec : parameter_layout(g, geom)) total += static_cast<std::int64_t>(shape_numel(spec.shape));
  return total;
}

std::int64_t linear_flops(std::int64_t tokens, std::int64_t in, std::int64_t out) { return 2 * tokens * in * out; }

std::int64_t flops_estimate(const Genotype& g, const TokenGeometry& geom) {
  const auto t = static_cast<std::int64_t>(geom.tokens);
  const std::int64_t seq = t + 1;
  const std::int64_t d = g.embed_dim;
  std::int64_t total = linear_flops(t, static_cast<std::int64_t>(geom.token_width), d);
  for (int b = 0; b < g.depth; ++b) {
    const std::int64_t inner = std::int64_t{kHeadDim} * g.num_heads[b];
    const std::int64_t hidden = std::int64_t{g.mlp_ratio[b]} * d;
    total += linear_flops(seq, d, 3 * inner);
    total += 2 * (2 * seq * seq * kHeadDim) * g.num_heads[b];
    total += linear_flops(seq, inner, d);
    total += linear_flops(seq, d, hidden);
    total += linear_flops(seq, hidden, d);
  }
  total += linear_flops(1, d, geom.num_classes);
  return total;
}

std::string to_jsonl_line(const Genotype& g) {
  nlohmann::ordered_json j;
  j["id"] = g.id.empty() ? genotype_id(g) : g.id;
  j["depth"] = g.depth;
  j["embed_dim"] = g.embed_dim;
  j["num_heads"] = g.num_heads;
  j["mlp_ratio"] = g.mlp_ratio;
  return j.dump();
}

Genotype genotype_from_json(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("genotype: invalid JSON: ") + e.what());
  }
  Genotype g;
  try {
    g.depth = j.at("depth").get<int>();
    g.embed_dim = j.at("embed_dim").get<int>();
    g.num_heads = j.at("num_heads").get<std::vector<int>>();
    g.mlp_ratio = j.at("mlp_ratio").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("genotype: ") + e.what());
  }
  validate_genotype(g);
  g.id = genotype_id(g);
  if (j.contains("id") && j["id"].get<std::string>() != g.id) {
    throw FormatError("genotype: id " + j["id"].get<std::string>() + " does not match content hash " + g.id);
  }
  return g;
}

void write_genotypes(const std::filesystem::path& path, const std::vector<Genotype>& genotypes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& g : genotypes) out << to_jsonl_line(g) << '\n';
}

std::vector<Genotype> read_genotypes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Genotype> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(genotype_from_json(line));
    } catch (const Error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace hytas
