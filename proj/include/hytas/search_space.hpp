#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hytas/tensor.hpp"

namespace hytas {

// Width of one attention head, independent of the embedding dimension.
inline constexpr int kHeadDim = 64;

struct IntRange {
  int start = 0;
  int stop = 0;  // inclusive
  int step = 1;

  std::vector<int> values() const;
  bool contains(int v) const;
  bool operator==(const IntRange&) const = default;
};

struct SearchSpaceConfig {
  IntRange depth{4, 10, 1};
  IntRange embed_dim{32, 240, 16};
  IntRange num_heads{3, 6, 1};
  IntRange mlp_ratio{1, 6, 1};
  std::size_t sample_count = 2000;
  std::uint64_t seed = 0;

  // Throws ConfigError on empty ranges or ranges outside the supported grid.
  void validate() const;
};

struct Genotype {
  int depth = 0;
  int embed_dim = 0;
  std::vector<int> num_heads;
  std::vector<int> mlp_ratio;
  std::string id;

  bool operator==(const Genotype&) const = default;
};

// Validates the fields against the default search space and fills in the id.
Genotype make_genotype(int depth, int embed_dim, std::vector<int> num_heads, std::vector<int> mlp_ratio);
void validate_genotype(const Genotype& g, const SearchSpaceConfig& space = {});

// Canonical JSON without the id; the id is its FNV-1a hash in hex.
std::string canonical_json(const Genotype& g);
std::string genotype_id(const Genotype& g);

std::vector<Genotype> sample_population(const SearchSpaceConfig& cfg);

// 4 sub-layers per block plus the embedding and the classification head.
int layer_count(const Genotype& g);

double mean_heads(const Genotype& g);
double mean_mlp_ratio(const Genotype& g);
int sum_head_dim(const Genotype& g);
int sum_mlp_dim(const Genotype& g);

// MS(a, b, c, d) with a = depth, b = MLP ratio, c = heads, d = embedding dim.
std::int64_t model_size_formula(std::int64_t depth, std::int64_t mlp_ratio, std::int64_t heads,
                                std::int64_t embed_dim, std::int64_t num_classes);
// Per-block ratio and head lists are reduced to their rounded means first.
std::int64_t model_size_formula(const Genotype& g, int num_classes);

struct TokenGeometry {
  std::size_t tokens = 20;       // T, excluding the class token
  std::size_t token_width = 10;  // D_in
  int num_classes = 16;

  void validate() const;
  bool operator==(const TokenGeometry&) const = default;
};

enum class LayerKind { Embed, MsaQkv, MsaProj, MlpFc1, MlpFc2, Head };

const char* layer_kind_name(LayerKind kind);
bool is_msa(LayerKind kind);
bool is_mlp(LayerKind kind);

enum class ParamRole { Weight, Bias, Gain, Embedding };

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t entry;  // 0-based registry position
  ParamRole role;
};

struct LayerSpec {
  LayerKind kind;
  std::optional<int> block;  // 1-based
};

// Registry skeleton in execution order: EMBED, [QKV, PROJ, FC1, FC2] x depth, HEAD.
std::vector<LayerSpec> layer_layout(const Genotype& g);
// Every learnable tensor of the network built for g, in creation order.
std::vector<ParamSpec> parameter_layout(const Genotype& g, const TokenGeometry& geom);

std::int64_t exact_param_count(const Genotype& g, const TokenGeometry& geom);

std::int64_t linear_flops(std::int64_t tokens, std::int64_t in, std::int64_t out);
// 2 * MACs of one batch-1 forward: linear maps plus attention score and value
// products. Norms, softmax and activations are not counted.
std::int64_t flops_estimate(const Genotype& g, const TokenGeometry& geom);

// Genotype JSONL: {"id","depth","embed_dim","num_heads","mlp_ratio"} per line.
std::string to_jsonl_line(const Genotype& g);
Genotype genotype_from_json(std::string_view line);
void write_genotypes(const std::filesystem::path& path, const std::vector<Genotype>& genotypes);
std::vector<Genotype> read_genotypes(const std::filesystem::path& path);

}  // namespace hytas
