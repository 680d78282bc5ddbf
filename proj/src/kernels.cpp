#include "hytas/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "hytas/error.hpp"

namespace hytas::kernels {
namespace {

constexpr std::size_t kParallelWork = 1U << 15;

void check_gemm(const char* name, GemmDims d, std::size_t a, std::size_t b, std::size_t c) {
  if (a < d.m * d.k || b < d.k * d.n || c < d.m * d.n) {
    throw DimensionError(std::string(name) + ": buffer too small for " + std::to_string(d.m) + "x" +
                         std::to_string(d.k) + " * " + std::to_string(d.k) + "x" + std::to_string(d.n));
  }
}

// Single rounding when the target has FMA; both GEMM paths go through this so they agree bitwise.
inline double madd(double a, double b, double c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return c + a * b;
#endif
}

bool go_parallel(std::size_t work) { return work >= kParallelWork && !omp_in_parallel(); }

// MR x NR register tile over k. Accumulates into C in k order.
template <int MR, int NR>
inline void gemm_tile(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc) {
  double acc[MR][NR];
  for (int r = 0; r < MR; ++r) {
    for (int j = 0; j < NR; ++j) acc[r][j] = c[r * ldc + j];
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    for (int r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[r][j] = madd(av, brow[j], acc[r][j]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int j = 0; j < NR; ++j) c[r * ldc + j] = acc[r][j];
  }
}

constexpr int kWide = 24;
constexpr int kNarrow = 8;
constexpr std::size_t kPanelRows = 4;
constexpr std::size_t kChunkRows = 64;
constexpr std::size_t kBlockCols = 240;
constexpr std::size_t kBlockDepth = 256;

// Copies B[p0:p1, j0:j1] into contiguous column strips of width kWide, kNarrow, then 1.
void pack_b(GemmDims d, std::size_t j0, std::size_t j1, std::size_t p0, std::size_t p1, const double* b,
            double* out) {
  std::size_t j = j0;
  auto strip = [&](std::size_t width) {
    for (std::size_t p = p0; p < p1; ++p) {
      const double* src = b + p * d.n + j;
      out = std::copy(src, src + width, out);
    }
    j += width;
  };
  while (j + kWide <= j1) strip(kWide);
  while (j + kNarrow <= j1) strip(kNarrow);
  while (j < j1) strip(1);
}

template <int MR>
void gemm_row_block(GemmDims d, std::size_t j0, std::size_t j1, std::size_t p0, std::size_t p1, const double* a,
                    const double* packed, double* c) {
  const std::size_t kk = p1 - p0;
  const double* ap = a + p0;
  std::size_t j = j0;
  for (; j + kWide <= j1; j += kWide, packed += kk * kWide) gemm_tile<MR, kWide>(kk, ap, d.k, packed, kWide, c + j, d.n);
  for (; j + kNarrow <= j1; j += kNarrow, packed += kk * kNarrow) {
    gemm_tile<MR, kNarrow>(kk, ap, d.k, packed, kNarrow, c + j, d.n);
  }
  for (; j < j1; ++j, packed += kk) gemm_tile<MR, 1>(kk, ap, d.k, packed, 1, c + j, d.n);
}

// Rows [i0, i1) of C, blocked so a kBlockDepth x kBlockCols slab of B stays in cache.
void gemm_rows(GemmDims d, std::size_t i0, std::size_t i1, const double* a, const double* b, double* c) {
  thread_local std::vector<double> packed;
  packed.resize(kBlockCols * kBlockDepth);
  for (std::size_t j0 = 0; j0 < d.n; j0 += kBlockCols) {
    const std::size_t j1 = std::min(d.n, j0 + kBlockCols);
    for (std::size_t p0 = 0; p0 < d.k; p0 += kBlockDepth) {
      const std::size_t p1 = std::min(d.k, p0 + kBlockDepth);
      pack_b(d, j0, j1, p0, p1, b, packed.data());
      std::size_t i = i0;
      for (; i + kPanelRows <= i1; i += kPanelRows) {
        gemm_row_block<kPanelRows>(d, j0, j1, p0, p1, a + i * d.k, packed.data(), c + i * d.n);
      }
      for (; i < i1; ++i) gemm_row_block<1>(d, j0, j1, p0, p1, a + i * d.k, packed.data(), c + i * d.n);
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

}  // namespace

void gemm(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("gemm", d, a.size(), b.size(), c.size());
  if (d.m == 0 || d.n == 0 || d.k == 0) return;
  const auto chunks = static_cast<std::int64_t>((d.m + kChunkRows - 1) / kChunkRows);
  const bool par = chunks > 1 && go_parallel(d.m * d.n * d.k);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t q = 0; q < chunks; ++q) {
    const std::size_t i0 = static_cast<std::size_t>(q) * kChunkRows;
    gemm_rows(d, i0, std::min(d.m, i0 + kChunkRows), a.data(), b.data(), c.data());
  }
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("gemm_nt", d, a.size(), b.size(), c.size());
  std::vector<double> bt(d.k * d.n);
  transpose(d.n, d.k, b.data(), bt.data());
  gemm(d, a, bt, c);
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("gemm_tn", d, a.size(), b.size(), c.size());
  std::vector<double> at(d.m * d.k);
  transpose(d.k, d.m, a.data(), at.data());
  gemm(d, at, b, c);
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (go_parallel(rows * cols * 8))
  for (std::int64_t r = 0; r < n; ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                     std::span<const double> gain, std::span<const double> bias, double eps,
                     std::span<double> out, std::span<double> mean, std::span<double> rstd) {
  const auto n = static_cast<std::int64_t>(rows);
  const double inv_cols = 1.0 / static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (go_parallel(rows * cols * 4))
  for (std::int64_t r = 0; r < n; ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[j];
    mu *= inv_cols;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
    var *= inv_cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gain[j] + bias[j];
    mean[r] = mu;
    rstd[r] = rs;
  }
}

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

namespace {

// tanh through a single exp; saturates cleanly to +-1.
inline double fast_tanh(double u) { return 1.0 - 2.0 / (1.0 + std::exp(2.0 * u)); }

}  // namespace

double gelu(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
  return 0.5 * x * (1.0 + fast_tanh(u));
}

double gelu_derivative(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
  const double t = fast_tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void gelu_forward(std::span<const double> in, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(in.size());
#pragma omp parallel for schedule(static) if (go_parallel(in.size() * 16))
  for (std::int64_t i = 0; i < n; ++i) out[i] = gelu(in[i]);
}

namespace reference {

void gemm(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("reference::gemm", d, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double acc = c[i * d.n + j];
      for (std::size_t p = 0; p < d.k; ++p) acc = madd(a[i * d.k + p], b[p * d.n + j], acc);
      c[i * d.n + j] = acc;
    }
  }
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("reference::gemm_nt", d, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double acc = c[i * d.n + j];
      for (std::size_t p = 0; p < d.k; ++p) acc = madd(a[i * d.k + p], b[j * d.k + p], acc);
      c[i * d.n + j] = acc;
    }
  }
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm("reference::gemm_tn", d, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double acc = c[i * d.n + j];
      for (std::size_t p = 0; p < d.k; ++p) acc = madd(a[p * d.m + i], b[p * d.n + j], acc);
      c[i * d.n + j] = acc;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = in[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[r * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[r * cols + j] = std::exp(in[r * cols + j] - mx);
      total += out[r * cols + j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] *= inv;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                     std::span<const double> gain, std::span<const double> bias, double eps,
                     std::span<double> out, std::span<double> mean, std::span<double> rstd) {
  const double inv_cols = 1.0 / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[r * cols + j];
    mu *= inv_cols;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[r * cols + j] - mu) * (in[r * cols + j] - mu);
    var *= inv_cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (in[r * cols + j] - mu) * rs * gain[j] + bias[j];
    mean[r] = mu;
    rstd[r] = rs;
  }
}

void gelu_forward(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = gelu(in[i]);
}

}  // namespace reference
}  // namespace hytas::kernels
