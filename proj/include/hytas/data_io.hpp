#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hytas/search_space.hpp"
#include "hytas/tensor.hpp"

namespace hytas {

inline constexpr std::size_t kDefaultBatchSize = 64;

enum class Provenance { Real, Random, Ones };
const char* provenance_name(Provenance p);

struct TokenBatch {
  Tensor data;              // (B, T, D_in)
  std::vector<int> labels;  // B entries in [0, num_classes)
  Provenance provenance = Provenance::Random;

  std::size_t batch_size() const { return data.dim(0); }
  std::size_t tokens() const { return data.dim(1); }
  std::size_t token_width() const { return data.dim(2); }

  void validate(int num_classes) const;
};

struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  // Band-sequential: values[(band * height + row) * width + col].
  std::vector<float> values;
  // Row-major class raster; 0 marks unlabeled pixels.
  std::optional<std::vector<std::int32_t>> labels;

  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return values[(band * height + row) * width + col];
  }
  void validate() const;
};

// Container: one JSON header line
//   {"height":H,"width":W,"bands":B,"dtype":"f32","layout":"band-sequential",
//    "standardize":bool,"labels":bool}
// then H*W*B little-endian float32 values, then H*W little-endian int32 labels
// when "labels" is true.
void write_cube(const std::filesystem::path& path, const HsiCube& cube, bool standardize_on_load = false);
HsiCube load_cube(const std::filesystem::path& path);

// Per-band zero mean / unit variance (ddof 0). Constant bands become zeros.
void standardize_bands(HsiCube& cube);

struct TokenizerParams {
  std::size_t patch = 1;
  std::size_t band_group = 10;
  std::size_t stride = 10;
};

std::size_t token_count(std::size_t bands, const TokenizerParams& p);
std::size_t token_width(const TokenizerParams& p);

// Tokens of the p x p neighborhood centred on (row, col), mirror-padded at the
// borders. Returns (T, p*p*g); token t covers bands [t*s, t*s+g), the last one
// right-aligned to the final band.
Tensor tokenize(const HsiCube& cube, std::size_t row, std::size_t col, const TokenizerParams& p);

// RANDOM: standard normal data with uniform labels. ONES: all-ones data, labels 0.
TokenBatch synth_batch(const TokenGeometry& geom, Provenance kind, std::uint64_t seed,
                       std::size_t batch_size = kDefaultBatchSize);

// Batch of tokenized pixels drawn at random from the labeled pixels of a cube
// (every pixel when the cube has no labels; labels then drawn uniformly).
TokenBatch cube_batch(const HsiCube& cube, const TokenizerParams& p, int num_classes, std::uint64_t seed,
                      std::size_t batch_size = kDefaultBatchSize);

// Synthetic cube with blocky class regions and class-specific smooth spectra.
HsiCube synth_cube(std::size_t height, std::size_t width, std::size_t bands, int num_classes, std::uint64_t seed);

// `cube:<path>` or `synth:<H>x<W>x<B>`.
struct InputSpec {
  enum class Kind { Cube, Synth } kind = Kind::Synth;
  std::filesystem::path path;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;

  static InputSpec parse(std::string_view text);
  std::string str() const;
};

// Loads or synthesizes the cube an InputSpec names.
HsiCube resolve_cube(const InputSpec& spec, int num_classes, std::uint64_t seed);

}  // namespace hytas
