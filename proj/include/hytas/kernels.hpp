#pragma once

// Dense numeric kernels behind the autodiff primitives.
//
// The functions in hytas::kernels are OpenMP-parallel over output rows; every
// output element is produced by one thread with a fixed accumulation order, so
// results do not depend on the thread count. hytas::kernels::reference holds
// straightforward serial versions with the same per-element operation order;
// tests compare the two bitwise and bench/ times them against each other.

#include <cstddef>
#include <span>

namespace hytas::kernels {

struct GemmDims {
  std::size_t m;
  std::size_t n;
  std::size_t k;
};

// C[m,n] += A[m,k] * B[k,n]
void gemm(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);
// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);
// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out);

// Normalizes each row to zero mean / unit variance, then applies gain and bias.
// mean and rstd receive one value per row for the backward pass.
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                     std::span<const double> gain, std::span<const double> bias, double eps,
                     std::span<double> out, std::span<double> mean, std::span<double> rstd);

// tanh-approximated GELU and its derivative.
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;
void gelu_forward(std::span<const double> in, std::span<double> out);

namespace reference {

void gemm(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);
void gemm_nt(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);
void gemm_tn(GemmDims dims, std::span<const double> a, std::span<const double> b, std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out);
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                     std::span<const double> gain, std::span<const double> bias, double eps,
                     std::span<double> out, std::span<double> mean, std::span<double> rstd);
void gelu_forward(std::span<const double> in, std::span<double> out);

}  // namespace reference

}  // namespace hytas::kernels
