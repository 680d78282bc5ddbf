#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hytas/data_io.hpp"
#include "hytas/model.hpp"
#include "hytas/search_space.hpp"

namespace hytas::testutil {

inline Genotype small_genotype() { return make_genotype(4, 32, {3, 4, 3, 3}, {1, 2, 1, 2}); }

inline TokenGeometry small_geometry() { return TokenGeometry{5, 10, 4}; }

inline SearchSpaceConfig small_space(std::size_t count, std::uint64_t seed) {
  SearchSpaceConfig cfg;
  cfg.depth = {4, 5, 1};
  cfg.embed_dim = {32, 48, 16};
  cfg.num_heads = {3, 4, 1};
  cfg.mlp_ratio = {1, 2, 1};
  cfg.sample_count = count;
  cfg.seed = seed;
  return cfg;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("hytas_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& child) const { return (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace hytas::testutil
