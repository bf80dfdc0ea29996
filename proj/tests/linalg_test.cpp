#include "tokroute/linalg.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

namespace tokroute {
namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = normal(rng);
  return m;
}

TEST(MatrixTest, RejectsZeroDimensions) {
  EXPECT_THROW(Matrix(0, 3), ShapeError);
  EXPECT_THROW(Matrix(3, 0), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<float>(3)), ShapeError);
}

TEST(MatrixTest, RowViewsAliasStorage) {
  Matrix m(2, 3);
  m.row(1)[2] = 5.0f;
  EXPECT_EQ(m(1, 2), 5.0f);
  EXPECT_EQ(m.data()[5], 5.0f);
}

TEST(MatmulTest, SmallProductByHand) {
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  const Matrix c = matmul(a, b);
  EXPECT_EQ(c, Matrix(2, 2, {58, 64, 139, 154}));
}

TEST(MatmulTest, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(serial::matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(MatmulTest, IdentityIsNeutral) {
  const Matrix a = random_matrix(7, 5, 1);
  EXPECT_EQ(matmul(a, Matrix::identity(5)), a);
  EXPECT_EQ(matmul(Matrix::identity(7), a), a);
}

TEST(MatmulTest, ParallelSerialAndTiledAreBitwiseEqual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = random_matrix(33 + seed, 17, seed);
    const Matrix b = random_matrix(17, 29, seed + 100);
    const Matrix serial_out = serial::matmul(a, b);
    EXPECT_EQ(matmul(a, b), serial_out);
    EXPECT_EQ(matmul_tiled(a, b, 16, 32), serial_out);
    EXPECT_EQ(matmul_tiled(a, b, 64, 64), serial_out);
  }
}

TEST(MatmulTest, MatchesLongDoubleReference) {
  const MatrixD a = matrix_cast<double>(random_matrix(9, 31, 3));
  const MatrixD b = matrix_cast<double>(random_matrix(31, 4, 4));
  const MatrixD c = matmul(a, b);
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < 31; ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      EXPECT_NEAR(c(i, j), static_cast<double>(acc), 1e-12);
    }
  }
}

TEST(MatmulTest, TransposeOfProduct) {
  const Matrix a = random_matrix(6, 4, 5);
  const Matrix b = random_matrix(4, 3, 6);
  const Matrix lhs = transpose(matmul(a, b));
  const Matrix rhs = matmul(transpose(b), transpose(a));
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_FLOAT_EQ(lhs.data()[i], rhs.data()[i]);
}

TEST(GeluTest, KnownValues) {
  // tanh approximation, evaluated independently in float64.
  EXPECT_DOUBLE_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8411919906082768, 1e-15);
  EXPECT_NEAR(gelu(-0.5), -0.15428599017485606, 1e-15);
}

TEST(GeluTest, GradientMatchesFiniteDifference) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double h = 1e-6;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    EXPECT_NEAR(gelu_grad(x), fd, 1e-8) << "x=" << x;
  }
}

TEST(SoftmaxTest, SumsToOneAndIsShiftInvariant) {
  const std::vector<double> v{2.0, 1.0, 0.0, -1.0};
  const auto p = softmax(v);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 1000.0;
  const auto q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
  EXPECT_NEAR(softmax(std::vector<double>{2.0, 1.0})[0], 0.7310585786300049, 1e-15);
}

TEST(SoftmaxTest, EmptyThrows) { EXPECT_THROW(softmax(std::vector<double>{}), ShapeError); }

}  // namespace
}  // namespace tokroute
