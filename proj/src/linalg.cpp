#include "tokroute/linalg.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tokroute {
namespace {

template <typename T>
void check_product(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs) {
  if (lhs.cols() != rhs.rows()) {
    throw ShapeError("matmul: lhs is " + std::to_string(lhs.rows()) + "x" +
                     std::to_string(lhs.cols()) + ", rhs is " + std::to_string(rhs.rows()) + "x" +
                     std::to_string(rhs.cols()));
  }
}

// Computes out[i, j0:j1) for one output row; acc must hold >= j1-j0 doubles.
template <typename T>
inline void row_product(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs, std::size_t i,
                        std::size_t j0, std::size_t j1, double* acc, BasicMatrix<T>& out) {
  const std::size_t width = j1 - j0;
  std::fill(acc, acc + width, 0.0);
  const auto lrow = lhs.row(i);
  for (std::size_t k = 0; k < lhs.cols(); ++k) {
    const double l = lrow[k];
    const auto rrow = rhs.row(k);
    for (std::size_t j = 0; j < width; ++j) acc[j] += l * static_cast<double>(rrow[j0 + j]);
  }
  auto orow = out.row(i);
  for (std::size_t j = 0; j < width; ++j) orow[j0 + j] = static_cast<T>(acc[j]);
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs) {
  check_product(lhs, rhs);
  BasicMatrix<T> out(lhs.rows(), rhs.cols());
  const auto rows = static_cast<std::ptrdiff_t>(lhs.rows());
#pragma omp parallel
  {
    std::vector<double> acc(rhs.cols());
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      row_product(lhs, rhs, static_cast<std::size_t>(i), 0, rhs.cols(), acc.data(), out);
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> matmul_tiled(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs,
                            std::size_t block_m, std::size_t block_n) {
  check_product(lhs, rhs);
  if (block_m == 0 || block_n == 0) throw ShapeError("matmul_tiled: tile sizes must be positive");
  BasicMatrix<T> out(lhs.rows(), rhs.cols());
  std::vector<double> acc(block_n);
  for (std::size_t i0 = 0; i0 < lhs.rows(); i0 += block_m) {
    const std::size_t i1 = std::min(i0 + block_m, lhs.rows());
    for (std::size_t j0 = 0; j0 < rhs.cols(); j0 += block_n) {
      const std::size_t j1 = std::min(j0 + block_n, rhs.cols());
      for (std::size_t i = i0; i < i1; ++i) row_product(lhs, rhs, i, j0, j1, acc.data(), out);
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

namespace serial {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs) {
  check_product(lhs, rhs);
  BasicMatrix<T> out(lhs.rows(), rhs.cols());
  std::vector<double> acc(rhs.cols());
  for (std::size_t i = 0; i < lhs.rows(); ++i) row_product(lhs, rhs, i, 0, rhs.cols(), acc.data(), out);
  return out;
}

template Matrix matmul(const Matrix&, const Matrix&);
template MatrixD matmul(const MatrixD&, const MatrixD&);

}  // namespace serial

template Matrix matmul(const Matrix&, const Matrix&);
template MatrixD matmul(const MatrixD&, const MatrixD&);
template Matrix matmul_tiled(const Matrix&, const Matrix&, std::size_t, std::size_t);
template MatrixD matmul_tiled(const MatrixD&, const MatrixD&, std::size_t, std::size_t);
template Matrix transpose(const Matrix&);
template MatrixD transpose(const MatrixD&);

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax of an empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace tokroute
