#pragma once

// Dense row-major matrices and the handful of numeric kernels the rest of
// the engine is built on. Storage is T (float for weights and activations,
// double for router training); every dot product accumulates in double.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tokroute/errors.h"

namespace tokroute {

template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix(std::size_t rows, std::size_t cols) : BasicMatrix(rows, cols, T{}) {}

  BasicMatrix(std::size_t rows, std::size_t cols, T fill) : rows_(rows), cols_(cols) {
    check_dims(rows, cols);
    data_.assign(rows * cols, fill);
  }

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims(rows, cols);
    if (data_.size() != rows * cols) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool operator==(const BasicMatrix&) const = default;

 private:
  static void check_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

// Row-parallel (OpenMP) product. Each output element sums over the inner
// dimension in ascending order, so the result is bitwise identical to
// serial::matmul and to matmul_tiled.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs);

// Same product computed in (block_m x block_n) output tiles.
template <typename T>
BasicMatrix<T> matmul_tiled(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs,
                            std::size_t block_m, std::size_t block_n);

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m);

namespace serial {
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& lhs, const BasicMatrix<T>& rhs);
}  // namespace serial

// tanh-approximation GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

// Max-subtracted softmax. Throws ShapeError on empty input.
std::vector<double> softmax(std::span<const double> v);

template <typename To, typename From>
BasicMatrix<To> matrix_cast(const BasicMatrix<From>& m) {
  std::vector<To> out(m.size());
  auto src = m.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
  return BasicMatrix<To>(m.rows(), m.cols(), std::move(out));
}

}  // namespace tokroute
