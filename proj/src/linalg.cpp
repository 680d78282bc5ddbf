#include "hytas/linalg.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "hytas/error.hpp"

namespace hytas::linalg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(std::span<const double> a, std::size_t rows, std::size_t cols) {
  if (a.size() != rows * cols || rows == 0 || cols == 0) {
    throw DimensionError("linalg: buffer of " + std::to_string(a.size()) + " values is not " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
  return {a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

}  // namespace

double nuclear_norm(std::span<const double> a, std::size_t rows, std::size_t cols) {
  const auto m = view(a, rows, cols);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().sum();
}

std::vector<double> symmetric_eigenvalues(std::span<const double> a, std::size_t n) {
  const auto m = view(a, n, n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("linalg: eigenvalue solver did not converge");
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

LogDet log_abs_det(std::span<const double> a, std::size_t n) {
  const auto m = view(a, n, n);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const Eigen::MatrixXd& packed = lu.matrixLU();
  LogDet out;
  out.sign = static_cast<int>(lu.permutationP().determinant());
  double min_pivot = INFINITY;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double p = packed(i, i);
    min_pivot = std::min(min_pivot, std::abs(p));
    if (p == 0.0) {
      out.sign = 0;
      out.log_abs = -INFINITY;
      continue;
    }
    if (p < 0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(p));
  }
  const double max_diag = m.diagonal().cwiseAbs().maxCoeff();
  out.pivot_ratio = max_diag > 0 ? min_pivot / max_diag : 0.0;
  return out;
}

}  // namespace hytas::linalg
