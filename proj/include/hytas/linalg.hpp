#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hytas::linalg {

// Sum of singular values of a row-major (rows, cols) matrix.
double nuclear_norm(std::span<const double> a, std::size_t rows, std::size_t cols);

// Eigenvalues of a symmetric row-major (n, n) matrix, ascending.
std::vector<double> symmetric_eigenvalues(std::span<const double> a, std::size_t n);

struct LogDet {
  double log_abs = 0.0;
  int sign = 0;
  // Smallest |pivot| of the LU factorization relative to the largest |diagonal| of the input.
  double pivot_ratio = 0.0;
};

LogDet log_abs_det(std::span<const double> a, std::size_t n);

}  // namespace hytas::linalg
