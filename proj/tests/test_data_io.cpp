#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "hytas/data_io.hpp"
#include "hytas/error.hpp"
#include "test_util.hpp"

using namespace hytas;

namespace {

HsiCube ramp_cube(std::size_t h, std::size_t w, std::size_t bands) {
  HsiCube c;
  c.height = h;
  c.width = w;
  c.bands = bands;
  c.values.resize(h * w * bands);
  for (std::size_t b = 0; b < bands; ++b) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        c.values[(b * h + r) * w + col] = static_cast<float>(1000 * b + 10 * r + col);
      }
    }
  }
  return c;
}

TEST(Tokenizer, TokenCountCoversEveryBand) {
  EXPECT_EQ(token_count(200, {1, 10, 10}), 20u);
  EXPECT_EQ(token_count(205, {1, 10, 10}), 21u);
  EXPECT_EQ(token_count(10, {1, 10, 10}), 1u);
  EXPECT_EQ(token_count(103, {1, 10, 5}), 20u);
  EXPECT_THROW(token_count(5, {1, 10, 10}), ConfigError);
  EXPECT_THROW(token_count(50, {1, 10, 0}), ConfigError);
}

TEST(Tokenizer, SinglePixelTokensAreBandGroups) {
  const auto cube = ramp_cube(3, 4, 25);
  const auto t = tokenize(cube, 1, 2, {1, 10, 10});
  ASSERT_EQ(t.shape(), (Shape{3, 10}));
  EXPECT_EQ(t[0], 12.0);
  EXPECT_EQ(t[9], 9012.0);
  EXPECT_EQ(t[10], 10012.0);
  // Last token is right-aligned to the final band.
  EXPECT_EQ(t[20], 15012.0);
  EXPECT_EQ(t[29], 24012.0);
}

TEST(Tokenizer, PatchIsMirrorPaddedAtBorders) {
  const auto cube = ramp_cube(3, 3, 4);
  const auto t = tokenize(cube, 0, 0, {3, 2, 2});
  ASSERT_EQ(t.shape(), (Shape{2, 18}));
  // Neighborhood rows (1, 0, 1) and cols (1, 0, 1); two bands per position.
  const std::vector<double> first{11, 1011, 10, 1010, 11, 1011, 1, 1001, 0, 1000, 1, 1001, 11, 1011, 10, 1010, 11, 1011};
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(t[i], first[i]) << i;
}

TEST(Tokenizer, RejectsPixelOutsideCube) {
  const auto cube = ramp_cube(2, 2, 10);
  EXPECT_THROW(tokenize(cube, 2, 0, {1, 10, 10}), ConfigError);
}

TEST(Cube, RoundTripIsBitExact) {
  testutil::TempDir dir("cube");
  auto cube = synth_cube(5, 6, 23, 4, 9);
  ASSERT_TRUE(cube.labels);
  write_cube(dir / "c.hsi", cube);
  const auto back = load_cube(dir / "c.hsi");
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.width, 6u);
  EXPECT_EQ(back.bands, 23u);
  EXPECT_EQ(back.values, cube.values);
  EXPECT_EQ(back.labels, cube.labels);

  cube.labels.reset();
  write_cube(dir / "n.hsi", cube);
  EXPECT_FALSE(load_cube(dir / "n.hsi").labels);
}

TEST(Cube, StandardizeFlagAppliedOnLoad) {
  testutil::TempDir dir("cube_std");
  const auto cube = ramp_cube(4, 4, 3);
  write_cube(dir / "c.hsi", cube, true);
  const auto back = load_cube(dir / "c.hsi");
  for (std::size_t b = 0; b < 3; ++b) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 16; ++i) mean += back.values[b * 16 + i];
    mean /= 16;
    for (std::size_t i = 0; i < 16; ++i) sq += (back.values[b * 16 + i] - mean) * (back.values[b * 16 + i] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / 16, 1.0, 1e-4);
  }
}

TEST(Cube, TruncatedPayloadReportsSizes) {
  testutil::TempDir dir("cube_trunc");
  write_cube(dir / "c.hsi", ramp_cube(4, 4, 3));
  const auto full = testutil::slurp(dir / "c.hsi");
  {
    std::ofstream out(dir / "t.hsi", std::ios::binary);
    out << full.substr(0, full.size() - 7);
  }
  try {
    load_cube(dir / "t.hsi");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("192"), std::string::npos) << e.what();
  }
  {
    std::ofstream out(dir / "h.hsi", std::ios::binary);
    out << "{not json}\n";
  }
  EXPECT_THROW(load_cube(dir / "h.hsi"), FormatError);
}

TEST(Batches, RandomAndOnesProvenance) {
  const TokenGeometry geom{20, 10, 16};
  const auto r1 = synth_batch(geom, Provenance::Random, 5);
  const auto r2 = synth_batch(geom, Provenance::Random, 5);
  const auto r3 = synth_batch(geom, Provenance::Random, 6);
  EXPECT_EQ(r1.batch_size(), kDefaultBatchSize);
  EXPECT_EQ(r1.data, r2.data);
  EXPECT_EQ(r1.labels, r2.labels);
  EXPECT_NE(r1.data, r3.data);
  EXPECT_EQ(r1.provenance, Provenance::Random);
  EXPECT_NO_THROW(r1.validate(16));

  const auto ones = synth_batch(geom, Provenance::Ones, 1, 3);
  for (double v : ones.data.data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(ones.labels, (std::vector<int>{0, 0, 0}));
}

TEST(Batches, CubeBatchUsesLabeledPixels) {
  const auto cube = synth_cube(8, 8, 30, 5, 3);
  const auto batch = cube_batch(cube, {1, 10, 10}, 5, 7, 16);
  EXPECT_EQ(batch.data.shape(), (Shape{16, 3, 10}));
  EXPECT_EQ(batch.provenance, Provenance::Real);
  for (int y : batch.labels) {
    EXPECT_GE(y, 0);
    EXPECT_LT(y, 5);
  }
  EXPECT_THROW(cube_batch(cube, {1, 10, 10}, 2, 7, 16), DataError);
}

TEST(Batches, ValidateCatchesBadLabels) {
  auto b = synth_batch({4, 3, 3}, Provenance::Random, 1, 4);
  b.labels[2] = 3;
  EXPECT_THROW(b.validate(3), DataError);
}

TEST(InputSpec, ParsesBothForms) {
  const auto s = InputSpec::parse("synth:16x16x200");
  EXPECT_EQ(s.kind, InputSpec::Kind::Synth);
  EXPECT_EQ(s.height, 16u);
  EXPECT_EQ(s.bands, 200u);
  EXPECT_EQ(s.str(), "synth:16x16x200");
  const auto c = InputSpec::parse("cube:/tmp/x.hsi");
  EXPECT_EQ(c.kind, InputSpec::Kind::Cube);
  EXPECT_EQ(c.path, "/tmp/x.hsi");
  EXPECT_THROW(InputSpec::parse("synth:16x16"), UsageError);
  EXPECT_THROW(InputSpec::parse("synth:0x16x20"), UsageError);
  EXPECT_THROW(InputSpec::parse("file:/x"), UsageError);
}

TEST(InputSpec, SynthCubeIsDeterministicAndStandardized) {
  const auto spec = InputSpec::parse("synth:6x5x40");
  const auto a = resolve_cube(spec, 4, 11);
  const auto b = resolve_cube(spec, 4, 11);
  EXPECT_EQ(a.values, b.values);
  double mean = 0.0;
  for (std::size_t i = 0; i < 30; ++i) mean += a.values[i];
  EXPECT_NEAR(mean / 30, 0.0, 1e-5);
}

}  // namespace
