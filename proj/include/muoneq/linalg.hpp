#pragma once

// Dense real matrix kernel: compact SVD by one-sided Jacobi, the exact polar
// factor, and the norms used throughout the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "muoneq/errors.hpp"

namespace muoneq {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

/// Compact SVD A = U diag(sigma) V^T with sigma strictly positive and
/// nonincreasing. A zero matrix yields rank 0 (empty factors).
template <typename Scalar>
struct SvdResult {
  MatrixX<Scalar> U;
  VectorX<Scalar> sigma;
  MatrixX<Scalar> V;

  Index rank() const { return sigma.size(); }
};

struct SvdOptions {
  int max_sweeps = 60;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& A, const char* op) {
  if (!A.allFinite()) {
    throw DomainError(std::string(op) + ": matrix has non-finite entries");
  }
}

// Hestenes one-sided Jacobi on W (p x q, p >= q). On return the columns of W
// are mutually orthogonal and W_in = W * V^T.
template <typename Scalar>
void one_sided_jacobi(MatrixX<Scalar>& W, MatrixX<Scalar>& V, int max_sweeps) {
  const Index q = W.cols();
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar tol = static_cast<Scalar>(std::max<Index>(W.rows(), 1)) * eps;
  V.setIdentity(q, q);
  if (q < 2) return;

  VectorX<Scalar> sq(q);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Index j = 0; j < q; ++j) sq(j) = W.col(j).squaredNorm();
    bool rotated = false;
    for (Index i = 0; i + 1 < q; ++i) {
      for (Index j = i + 1; j < q; ++j) {
        const Scalar alpha = sq(i);
        const Scalar beta = sq(j);
        if (alpha == Scalar(0) || beta == Scalar(0)) continue;
        const Scalar gamma = W.col(i).dot(W.col(j));
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        // x <- c x - s y, y <- s x + c y on columns (i, j) of W and V.
        const Eigen::JacobiRotation<Scalar> rot(c, s);
        W.applyOnTheRight(i, j, rot);
        V.applyOnTheRight(i, j, rot);
        sq(i) = alpha - t * gamma;
        sq(j) = beta + t * gamma;
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("svd: one-sided Jacobi did not converge in " +
                       std::to_string(max_sweeps) + " sweeps");
}

}  // namespace detail

/// Compact SVD via one-sided Jacobi on the thinner orientation, preconditioned
/// by a column-pivoted QR (Jacobi runs on R^T). Singular values at or below
/// max(m,n) * sigma_1 * eps are treated as zero.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& A,
                                        const SvdOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(A, "svd");
  const Index m = A.rows();
  const Index n = A.cols();
  const bool transposed = m < n;

  // W = A or A^T, p x q with p >= q. W P = Q R, so W = (Q V_j) S (P U_j)^T
  // where R^T = U_j S V_j^T comes from Jacobi on R^T.
  const MatrixX<Scalar> W = transposed ? MatrixX<Scalar>(A.transpose()) : MatrixX<Scalar>(A);
  const Index q = W.cols();
  const Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(W);
  MatrixX<Scalar> Rt = qr.matrixR().topRows(q).template triangularView<Eigen::Upper>().transpose();
  MatrixX<Scalar> Vj;
  detail::one_sided_jacobi(Rt, Vj, opts.max_sweeps);

  VectorX<Scalar> col_norms(q);
  for (Index j = 0; j < q; ++j) col_norms(j) = Rt.col(j).norm();
  std::vector<Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return col_norms(x) > col_norms(y); });

  const Scalar sigma1 = q > 0 ? col_norms(order.front()) : Scalar(0);
  const Scalar cutoff = static_cast<Scalar>(std::max(m, n)) * sigma1 *
                        std::numeric_limits<Scalar>::epsilon();
  Index r = 0;
  while (r < q && col_norms(order[r]) > cutoff && col_norms(order[r]) > Scalar(0)) ++r;

  SvdResult<Scalar> out;
  out.sigma.resize(r);
  MatrixX<Scalar> uj(q, r);
  MatrixX<Scalar> vj(q, r);
  for (Index k = 0; k < r; ++k) {
    const Index j = order[k];
    out.sigma(k) = col_norms(j);
    uj.col(k) = Rt.col(j) / col_norms(j);
    vj.col(k) = Vj.col(j);
  }
  MatrixX<Scalar> left = MatrixX<Scalar>::Zero(W.rows(), r);
  left.topRows(q) = vj;
  left.applyOnTheLeft(qr.householderQ());
  MatrixX<Scalar> right = qr.colsPermutation() * uj;
  if (transposed) {
    out.U = std::move(right);
    out.V = std::move(left);
  } else {
    out.U = std::move(left);
    out.V = std::move(right);
  }
  return out;
}

/// Orth(A) = U V^T from the compact SVD; Orth(0) = 0.
template <typename Derived>
MatrixX<typename Derived::Scalar> polar_factor(const Eigen::MatrixBase<Derived>& A) {
  const auto f = svd(A);
  if (f.rank() == 0) return MatrixX<typename Derived::Scalar>::Zero(A.rows(), A.cols());
  return f.U * f.V.transpose();
}

template <typename Scalar>
struct Norms {
  Scalar frobenius = 0;
  Scalar spectral = 0;
  Scalar nuclear = 0;
  Scalar max_abs = 0;
};

template <typename Derived>
Norms<typename Derived::Scalar> norms(const Eigen::MatrixBase<Derived>& A) {
  const auto f = svd(A);
  Norms<typename Derived::Scalar> out;
  out.frobenius = A.norm();
  out.max_abs = A.size() > 0 ? A.cwiseAbs().maxCoeff() : 0;
  if (f.rank() > 0) {
    out.spectral = f.sigma(0);
    out.nuclear = f.sigma.sum();
  }
  return out;
}

template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& A) {
  const auto f = svd(A);
  return f.rank() > 0 ? f.sigma(0) : typename Derived::Scalar(0);
}

template <typename Scalar>
struct RowColSqNorms {
  VectorX<Scalar> rows;
  VectorX<Scalar> cols;
};

/// Row and column sums of A .* A.
template <typename Derived>
RowColSqNorms<typename Derived::Scalar> row_col_sq_norms(const Eigen::MatrixBase<Derived>& A) {
  detail::require_finite(A, "row_col_sq_norms");
  RowColSqNorms<typename Derived::Scalar> out;
  out.rows = A.array().square().rowwise().sum().matrix();
  out.cols = A.array().square().colwise().sum().transpose().matrix();
  return out;
}

/// Frobenius inner product <A, B> = tr(A^T B).
template <typename DA, typename DB>
typename DA::Scalar frobenius_inner(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
  return A.cwiseProduct(B).sum();
}

}  // namespace muoneq
