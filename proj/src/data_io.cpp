#include "hytas/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "hytas/error.hpp"
#include "hytas/rng.hpp"

namespace hytas {

static_assert(std::endian::native == std::endian::little, "cube IO assumes a little-endian host");

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Real: return "REAL";
    case Provenance::Random: return "RANDOM";
    case Provenance::Ones: return "ONES";
  }
  return "?";
}

void TokenBatch::validate(int num_classes) const {
  if (data.rank() != 3) throw DimensionError("batch: data must be (B, T, D_in), got " + shape_str(data.shape()));
  if (labels.size() != data.dim(0)) throw DimensionError("batch: label count does not match batch size");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError("batch: label " + std::to_string(y) + " out of range");
  }
  if (!data.all_finite()) throw DataError("batch: non-finite token values");
}

void HsiCube::validate() const {
  if (height == 0 || width == 0 || bands == 0) throw FormatError("cube: zero extent");
  if (values.size() != height * width * bands) throw FormatError("cube: value count does not match extents");
  if (labels && labels->size() != height * width) throw FormatError("cube: label raster does not match height*width");
}

void write_cube(const std::filesystem::path& path, const HsiCube& cube, bool standardize_on_load) {
  cube.validate();
  nlohmann::ordered_json header;
  header["height"] = cube.height;
  header["width"] = cube.width;
  header["bands"] = cube.bands;
  header["dtype"] = "f32";
  header["layout"] = "band-sequential";
  header["standardize"] = standardize_on_load;
  header["labels"] = cube.labels.has_value();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(cube.values.data()),
            static_cast<std::streamsize>(cube.values.size() * sizeof(float)));
  if (cube.labels) {
    out.write(reinterpret_cast<const char*>(cube.labels->data()),
              static_cast<std::streamsize>(cube.labels->size() * sizeof(std::int32_t)));
  }
}

HsiCube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw FormatError("cube: missing header line in " + path.string());
  nlohmann::json header;
  HsiCube cube;
  bool standardize = false;
  bool has_labels = false;
  try {
    header = nlohmann::json::parse(header_line);
    cube.height = header.at("height").get<std::size_t>();
    cube.width = header.at("width").get<std::size_t>();
    cube.bands = header.at("bands").get<std::size_t>();
    if (header.value("dtype", std::string("f32")) != "f32") throw FormatError("cube: only dtype f32 is supported");
    if (header.value("layout", std::string("band-sequential")) != "band-sequential") {
      throw FormatError("cube: only band-sequential layout is supported");
    }
    standardize = header.value("standardize", false);
    has_labels = header.value("labels", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cube: bad header: ") + e.what());
  }
  if (cube.height == 0 || cube.width == 0 || cube.bands == 0) throw FormatError("cube: zero extent in header");

  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t pixels = cube.height * cube.width;
  const std::size_t value_bytes = pixels * cube.bands * sizeof(float);
  const std::size_t label_bytes = has_labels ? pixels * sizeof(std::int32_t) : 0;
  if (payload.size() != value_bytes + label_bytes) {
    throw FormatError("cube: payload is " + std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(value_bytes + label_bytes));
  }
  cube.values.resize(pixels * cube.bands);
  std::memcpy(cube.values.data(), payload.data(), value_bytes);
  if (has_labels) {
    std::vector<std::int32_t> labels(pixels);
    std::memcpy(labels.data(), payload.data() + value_bytes, label_bytes);
    cube.labels = std::move(labels);
  }
  for (float v : cube.values) {
    if (!std::isfinite(v)) throw DataError("cube: non-finite value in " + path.string());
  }
  if (standardize) standardize_bands(cube);
  return cube;
}

void standardize_bands(HsiCube& cube) {
  constexpr double kEps = 1e-12;
  const std::size_t pixels = cube.height * cube.width;
  for (std::size_t b = 0; b < cube.bands; ++b) {
    float* band = cube.values.data() + b * pixels;
    double mu = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) mu += band[i];
    mu /= static_cast<double>(pixels);
    double var = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) var += (band[i] - mu) * (band[i] - mu);
    var /= static_cast<double>(pixels);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < pixels; ++i) {
      band[i] = sd > kEps ? static_cast<float>((band[i] - mu) / sd) : 0.0F;
    }
  }
}

std::size_t token_count(std::size_t bands, const TokenizerParams& p) {
  if (p.band_group == 0 || p.stride == 0 || p.patch == 0) throw ConfigError("tokenizer: parameters must be positive");
  if (p.band_group > bands) {
    throw ConfigError("tokenizer: band group " + std::to_string(p.band_group) + " exceeds " + std::to_string(bands) +
                      " bands");
  }
  return (bands - p.band_group + p.stride - 1) / p.stride + 1;
}

std::size_t token_width(const TokenizerParams& p) { return p.patch * p.patch * p.band_group; }

namespace {

// Reflect without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

Tensor tokenize(const HsiCube& cube, std::size_t row, std::size_t col, const TokenizerParams& p) {
  const std::size_t t_count = token_count(cube.bands, p);
  if (row >= cube.height || col >= cube.width) throw ConfigError("tokenizer: pixel outside the cube");
  const std::size_t width = token_width(p);
  Tensor out(Shape{t_count, width}, 0.0);
  const auto half = static_cast<std::ptrdiff_t>(p.patch / 2);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t start = std::min(t * p.stride, cube.bands - p.band_group);
    std::size_t k = 0;
    for (std::size_t dr = 0; dr < p.patch; ++dr) {
      const std::size_t r = reflect(static_cast<std::ptrdiff_t>(row) - half + static_cast<std::ptrdiff_t>(dr), cube.height);
      for (std::size_t dc = 0; dc < p.patch; ++dc) {
        const std::size_t c = reflect(static_cast<std::ptrdiff_t>(col) - half + static_cast<std::ptrdiff_t>(dc), cube.width);
        for (std::size_t g = 0; g < p.band_group; ++g) out[t * width + k++] = cube.at(r, c, start + g);
      }
    }
  }
  return out;
}

TokenBatch synth_batch(const TokenGeometry& geom, Provenance kind, std::uint64_t seed, std::size_t batch_size) {
  geom.validate();
  if (batch_size == 0) throw ConfigError("batch: batch size must be positive");
  TokenBatch batch;
  batch.provenance = kind;
  const Shape shape{batch_size, geom.tokens, geom.token_width};
  switch (kind) {
    case Provenance::Ones:
      batch.data = Tensor(shape, 1.0);
      batch.labels.assign(batch_size, 0);
      break;
    case Provenance::Random: {
      Rng rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_int_distribution<int> label(0, geom.num_classes - 1);
      batch.data = Tensor(shape, 0.0);
      for (double& v : batch.data.data()) v = normal(rng);
      for (std::size_t b = 0; b < batch_size; ++b) batch.labels.push_back(label(rng));
      break;
    }
    case Provenance::Real:
      throw ConfigError("synth_batch: REAL batches come from cube_batch");
  }
  return batch;
}

TokenBatch cube_batch(const HsiCube& cube, const TokenizerParams& p, int num_classes, std::uint64_t seed,
                      std::size_t batch_size) {
  cube.validate();
  if (batch_size == 0) throw ConfigError("batch: batch size must be positive");
  std::vector<std::size_t> candidates;
  const std::size_t pixels = cube.height * cube.width;
  for (std::size_t i = 0; i < pixels; ++i) {
    if (!cube.labels || (*cube.labels)[i] > 0) candidates.push_back(i);
  }
  if (candidates.empty()) throw DataError("cube: no labeled pixels");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  const std::size_t t_count = token_count(cube.bands, p);
  const std::size_t width = token_width(p);
  TokenBatch batch;
  batch.provenance = Provenance::Real;
  batch.data = Tensor(Shape{batch_size, t_count, width}, 0.0);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t pix = candidates[pick(rng)];
    const Tensor tokens = tokenize(cube, pix / cube.width, pix % cube.width, p);
    std::copy(tokens.data().begin(), tokens.data().end(), batch.data.data().begin() + b * t_count * width);
    if (cube.labels) {
      const int y = (*cube.labels)[pix] - 1;
      if (y >= num_classes) throw DataError("cube: label " + std::to_string(y + 1) + " exceeds class count");
      batch.labels.push_back(y);
    } else {
      batch.labels.push_back(label(rng));
    }
  }
  return batch;
}

HsiCube synth_cube(std::size_t height, std::size_t width, std::size_t bands, int num_classes, std::uint64_t seed) {
  if (height == 0 || width == 0 || bands == 0 || num_classes < 1) throw ConfigError("synth cube: bad extents");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Each class spectrum is a sum of three smooth bumps.
  std::vector<std::vector<double>> spectra(static_cast<std::size_t>(num_classes), std::vector<double>(bands));
  for (auto& s : spectra) {
    for (int bump = 0; bump < 3; ++bump) {
      const double centre = unit(rng) * static_cast<double>(bands);
      const double spread = 0.05 * static_cast<double>(bands) + unit(rng) * 0.2 * static_cast<double>(bands);
      const double amp = 0.5 + unit(rng);
      for (std::size_t b = 0; b < bands; ++b) {
        const double z = (static_cast<double>(b) - centre) / spread;
        s[b] += amp * std::exp(-0.5 * z * z);
      }
    }
  }
  HsiCube cube;
  cube.height = height;
  cube.width = width;
  cube.bands = bands;
  cube.values.resize(height * width * bands);
  std::vector<std::int32_t> labels(height * width);
  constexpr std::size_t kTile = 4;
  const std::size_t tiles_x = (width + kTile - 1) / kTile;
  std::vector<int> tile_class(((height + kTile - 1) / kTile) * tiles_x);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  for (int& c : tile_class) c = cls(rng);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const int k = tile_class[(r / kTile) * tiles_x + c / kTile];
      labels[r * width + c] = k + 1;
      for (std::size_t b = 0; b < bands; ++b) {
        cube.values[(b * height + r) * width + c] = static_cast<float>(spectra[k][b] + 0.1 * normal(rng));
      }
    }
  }
  cube.labels = std::move(labels);
  return cube;
}

InputSpec InputSpec::parse(std::string_view text) {
  InputSpec spec;
  if (text.starts_with("cube:")) {
    spec.kind = Kind::Cube;
    spec.path = std::string(text.substr(5));
    if (spec.path.empty()) throw UsageError("input: empty cube path");
    return spec;
  }
  if (text.starts_with("synth:")) {
    spec.kind = Kind::Synth;
    const std::string dims(text.substr(6));
    unsigned long h = 0, w = 0, b = 0;
    char x1 = 0, x2 = 0;
    int consumed = 0;
    if (std::sscanf(dims.c_str(), "%lu%c%lu%c%lu%n", &h, &x1, &w, &x2, &b, &consumed) != 5 || x1 != 'x' ||
        x2 != 'x' || static_cast<std::size_t>(consumed) != dims.size() || h == 0 || w == 0 || b == 0) {
      throw UsageError("input: expected synth:<H>x<W>x<B>, got '" + std::string(text) + "'");
    }
    spec.height = h;
    spec.width = w;
    spec.bands = b;
    return spec;
  }
  throw UsageError("input: expected cube:<path> or synth:<H>x<W>x<B>, got '" + std::string(text) + "'");
}

std::string InputSpec::str() const {
  if (kind == Kind::Cube) return "cube:" + path.string();
  return "synth:" + std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(bands);
}

HsiCube resolve_cube(const InputSpec& spec, int num_classes, std::uint64_t seed) {
  if (spec.kind == InputSpec::Kind::Cube) return load_cube(spec.path);
  HsiCube cube = synth_cube(spec.height, spec.width, spec.bands, num_classes, seed);
  standardize_bands(cube);
  return cube;
}

}  // namespace hytas
