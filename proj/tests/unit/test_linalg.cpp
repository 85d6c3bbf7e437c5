#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "muoneq/linalg.hpp"
#include "muoneq/rng.hpp"

using namespace muoneq;

namespace {

Matrix reconstruct(const SvdResult<double>& f) { return f.U * f.sigma.asDiagonal() * f.V.transpose(); }

void expect_valid_svd(const Matrix& A, const SvdResult<double>& f) {
  const Index r = f.rank();
  ASSERT_EQ(f.U.cols(), r);
  ASSERT_EQ(f.V.cols(), r);
  if (r == 0) return;
  EXPECT_LE((f.U.transpose() * f.U - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((f.V.transpose() * f.V - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((A - reconstruct(f)).norm(), 1e-9 * std::max(1.0, A.norm()));
  for (Index i = 0; i < r; ++i) {
    EXPECT_GT(f.sigma(i), 0.0);
    if (i > 0) EXPECT_LE(f.sigma(i), f.sigma(i - 1));
  }
}

}  // namespace

TEST(Svd, DiagonalIsItsOwnDecomposition) {
  Matrix A(2, 2);
  A << 2, 0, 0, 1;
  const auto f = svd(A);
  ASSERT_EQ(f.rank(), 2);
  EXPECT_DOUBLE_EQ(f.sigma(0), 2.0);
  EXPECT_DOUBLE_EQ(f.sigma(1), 1.0);
  EXPECT_TRUE(f.U.cwiseAbs().isApprox(Matrix::Identity(2, 2)));
  EXPECT_TRUE((f.U * f.V.transpose()).isApprox(Matrix::Identity(2, 2)));
}

TEST(Svd, ZeroMatrixHasRankZero) {
  const auto f = svd(Matrix::Zero(2, 3));
  EXPECT_EQ(f.rank(), 0);
  EXPECT_EQ(f.U.rows(), 2);
  EXPECT_EQ(f.V.rows(), 3);
}

TEST(Svd, AntiDiagonalByHand) {
  // A^T A = diag(9, 4).
  Matrix A(2, 2);
  A << 0, 2, -3, 0;
  const auto f = svd(A);
  ASSERT_EQ(f.rank(), 2);
  EXPECT_NEAR(f.sigma(0), 3.0, 1e-14);
  EXPECT_NEAR(f.sigma(1), 2.0, 1e-14);
  expect_valid_svd(A, f);
}

TEST(Svd, MatchesEigenOnRandomShapes) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.below(40));
    const Index n = 1 + static_cast<Index>(rng.below(40));
    const Matrix A = rng.gaussian(m, n) * std::pow(10.0, rng.uniform(-3, 3));
    const auto f = svd(A);
    expect_valid_svd(A, f);
    const Eigen::BDCSVD<Matrix> oracle(A);
    const Vector& s = oracle.singularValues();
    ASSERT_EQ(f.rank(), std::min(m, n));
    for (Index i = 0; i < f.rank(); ++i) EXPECT_NEAR(f.sigma(i), s(i), 1e-12 * s(0));
  }
}

TEST(Svd, RankDeficientInputDropsNullDirections) {
  Rng rng(11);
  const Matrix A = rng.gaussian(30, 4) * rng.gaussian(4, 20);
  const auto f = svd(A);
  EXPECT_EQ(f.rank(), 4);
  expect_valid_svd(A, f);
}

TEST(Svd, WideDynamicRangeKeepsSmallSingularValuesAccurate) {
  // Relative accuracy on graded matrices is what the Jacobi path buys.
  Rng rng(3);
  const Index n = 12;
  Matrix Q1 = Eigen::HouseholderQR<Matrix>(rng.gaussian(n, n)).householderQ();
  Matrix Q2 = Eigen::HouseholderQR<Matrix>(rng.gaussian(n, n)).householderQ();
  Vector s(n);
  for (Index i = 0; i < n; ++i) s(i) = std::pow(10.0, -static_cast<double>(i) / 2.0);
  const Matrix A = Q1 * s.asDiagonal() * Q2.transpose();
  const auto f = svd(A);
  ASSERT_EQ(f.rank(), n);
  for (Index i = 0; i < n; ++i) EXPECT_NEAR(f.sigma(i) / s(i), 1.0, 1e-9);
}

TEST(Svd, RejectsNonFinite) {
  Matrix A = Matrix::Ones(2, 2);
  A(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(svd(A), DomainError);
  A(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(polar_factor(A), DomainError);
}

TEST(Svd, SweepCapRaisesNumericalError) {
  Rng rng(5);
  const Matrix A = rng.gaussian(20, 20);
  EXPECT_THROW(svd(A, SvdOptions{1}), NumericalError);
}

TEST(PolarFactor, PositiveDiagonalGivesIdentity) {
  Matrix A(2, 2);
  A << 2, 0, 0, 3;
  EXPECT_TRUE(polar_factor(A).isApprox(Matrix::Identity(2, 2), 1e-14));
}

TEST(PolarFactor, AntiDiagonalByHand) {
  Matrix A(2, 2), expected(2, 2);
  A << 0, 2, -3, 0;
  expected << 0, 1, -1, 0;
  EXPECT_LE((polar_factor(A) - expected).norm(), 1e-14);
}

TEST(PolarFactor, ZeroMapsToZero) {
  const Matrix P = polar_factor(Matrix::Zero(3, 2));
  EXPECT_EQ(P.rows(), 3);
  EXPECT_EQ(P.cols(), 2);
  EXPECT_EQ(P.norm(), 0.0);
}

TEST(PolarFactor, AgreesWithGramInverseSquareRoot) {
  Rng rng(19);
  const Matrix A = rng.gaussian(9, 5);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A);
  const Matrix inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose();
  EXPECT_LE((polar_factor(A) - A * inv_sqrt).norm(), 1e-12);
}

TEST(PolarFactor, InvariantUnderPositiveScaling) {
  Rng rng(23);
  const Matrix A = rng.gaussian(6, 10);
  EXPECT_LE((polar_factor(A) - polar_factor(1e-5 * A)).norm(), 1e-12);
  EXPECT_LE((polar_factor(A) - polar_factor(3e4 * A)).norm(), 1e-12);
}

TEST(Norms, Identity) {
  const auto n = norms(Matrix::Identity(2, 2));
  EXPECT_DOUBLE_EQ(n.frobenius, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(n.spectral, 1.0);
  EXPECT_DOUBLE_EQ(n.nuclear, 2.0);
  EXPECT_DOUBLE_EQ(n.max_abs, 1.0);
}

TEST(Norms, DiagonalByHand) {
  Matrix A(2, 2);
  A << 3, 0, 0, 4;
  const auto n = norms(A);
  EXPECT_DOUBLE_EQ(n.frobenius, 5.0);
  EXPECT_DOUBLE_EQ(n.spectral, 4.0);
  EXPECT_DOUBLE_EQ(n.nuclear, 7.0);
  EXPECT_DOUBLE_EQ(spectral_norm(A), 4.0);
}

TEST(Norms, ZeroMatrix) {
  const auto n = norms(Matrix::Zero(3, 3));
  EXPECT_EQ(n.frobenius, 0.0);
  EXPECT_EQ(n.spectral, 0.0);
  EXPECT_EQ(n.nuclear, 0.0);
  EXPECT_EQ(n.max_abs, 0.0);
}

TEST(Norms, OrderingHoldsOnRandomMatrices) {
  Rng rng(29);
  for (int i = 0; i < 20; ++i) {
    const Matrix A = rng.gaussian(1 + static_cast<Index>(rng.below(15)), 1 + static_cast<Index>(rng.below(15)));
    const auto n = norms(A);
    EXPECT_LE(n.max_abs, n.spectral + 1e-12);
    EXPECT_LE(n.spectral, n.frobenius + 1e-12);
    EXPECT_LE(n.frobenius, n.nuclear + 1e-12);
  }
}

TEST(RowColSqNorms, ByHand) {
  Matrix A(1, 2);
  A << 3, 4;
  const auto s = row_col_sq_norms(A);
  EXPECT_DOUBLE_EQ(s.rows(0), 25.0);
  EXPECT_DOUBLE_EQ(s.cols(0), 9.0);
  EXPECT_DOUBLE_EQ(s.cols(1), 16.0);

  const auto id = row_col_sq_norms(Matrix::Identity(2, 2));
  EXPECT_TRUE(id.rows.isOnes());
  EXPECT_TRUE(id.cols.isOnes());
  const auto z = row_col_sq_norms(Matrix::Zero(2, 2));
  EXPECT_TRUE(z.rows.isZero());
  EXPECT_TRUE(z.cols.isZero());
}

TEST(FrobeniusInner, MatchesTrace) {
  Rng rng(31);
  const Matrix A = rng.gaussian(4, 7), B = rng.gaussian(4, 7);
  EXPECT_NEAR(frobenius_inner(A, B), (A.transpose() * B).trace(), 1e-12);
}
