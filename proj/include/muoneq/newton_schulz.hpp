#pragma once

// Finite-step Newton-Schulz polar iteration
//   X_{k+1} = (a I + b X_k X_k^T + c (X_k X_k^T)^2) X_k
// run on the side with fewer rows.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "muoneq/linalg.hpp"

namespace muoneq {

/// phi(s) = a s + b s^3 + c s^5, q(t) = a + b t + c t^2.
struct NsPolynomial {
  double a = 0;
  double b = 0;
  double c = 0;

  double q(double t) const { return a + t * (b + t * c); }
  double phi(double s) const { return s * q(s * s); }

  /// (15/8, -5/4, 3/8): degree-two Taylor coefficients, used by NS5.
  static constexpr NsPolynomial taylor() { return {15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0}; }
  /// (3.4445, -4.7750, 2.0315): the quintic common in Muon implementations.
  static constexpr NsPolynomial practical() { return {3.4445, -4.7750, 2.0315}; }
};

/// Throws DomainError unless a > 1 and 0 < q(t) <= a on [0, 1]. The check is
/// closed form: q is quadratic, so only the endpoints and the vertex matter.
void validate_polynomial(const NsPolynomial& poly);

/// "taylor" | "practical"
NsPolynomial polynomial_preset(std::string_view name);

enum class Prescale {
  Frobenius,      // X_0 = G / ||G||_F
  Max1Frobenius,  // X_0 = G / max(1, ||G||_F)
};

struct NsConfig {
  NsPolynomial polynomial = NsPolynomial::practical();
  int steps = 5;
  Prescale prescale = Prescale::Frobenius;

  /// Five Taylor steps with max(1, ||.||_F) pre-scaling.
  static NsConfig ns5() { return {NsPolynomial::taylor(), 5, Prescale::Max1Frobenius}; }
};

template <typename Scalar>
struct NsTrajectory {
  std::vector<MatrixX<Scalar>> iterates;    // X_0 .. X_K, caller orientation
  std::vector<Scalar> per_step_error;       // ||X_k - Orth(G)||_F
};

template <typename Scalar>
struct NsResult {
  MatrixX<Scalar> output;
  std::optional<NsTrajectory<Scalar>> trajectory;
};

namespace detail {

template <typename Scalar>
Scalar ns_prescale(Scalar frob, Prescale rule) {
  return rule == Prescale::Frobenius ? frob : std::max(Scalar(1), frob);
}

}  // namespace detail

/// With record set, keeps every iterate and its Frobenius distance to
/// Orth(G); `reference` may supply that polar factor to skip the SVD.
template <typename Derived>
NsResult<typename Derived::Scalar> ns_run(const Eigen::MatrixBase<Derived>& G, const NsConfig& cfg,
                                          bool record = false,
                                          const MatrixX<typename Derived::Scalar>* reference = nullptr) {
  using Scalar = typename Derived::Scalar;
  validate_polynomial(cfg.polynomial);
  if (cfg.steps < 0) throw UsageError("ns_run: steps must be >= 0");
  detail::require_finite(G, "ns_run");

  NsResult<Scalar> out;
  const Scalar frob = G.norm();
  const bool transposed = G.rows() > G.cols();
  std::optional<MatrixX<Scalar>> orth;
  if (record) {
    out.trajectory.emplace();
    orth = reference != nullptr ? *reference : polar_factor(G);
  }
  auto push = [&](const MatrixX<Scalar>& X) {
    if (!record) return;
    MatrixX<Scalar> Xc = transposed ? MatrixX<Scalar>(X.transpose()) : X;
    out.trajectory->per_step_error.push_back((Xc - *orth).norm());
    out.trajectory->iterates.push_back(std::move(Xc));
  };

  if (frob == Scalar(0)) {
    out.output = MatrixX<Scalar>::Zero(G.rows(), G.cols());
    for (int k = 0; k <= cfg.steps; ++k) push(out.output);
    return out;
  }

  const auto a = static_cast<Scalar>(cfg.polynomial.a);
  const auto b = static_cast<Scalar>(cfg.polynomial.b);
  const auto c = static_cast<Scalar>(cfg.polynomial.c);
  MatrixX<Scalar> X = transposed ? MatrixX<Scalar>(G.transpose()) : MatrixX<Scalar>(G);
  X /= detail::ns_prescale(frob, cfg.prescale);
  push(X);

  MatrixX<Scalar> gram(X.rows(), X.rows());
  MatrixX<Scalar> poly(X.rows(), X.rows());
  for (int k = 0; k < cfg.steps; ++k) {
    gram.noalias() = X * X.transpose();
    poly.noalias() = c * gram * gram;
    poly += b * gram;
    poly.diagonal().array() += a;
    X = poly * X;
    if (!X.allFinite()) {
      throw NumericalError("ns_run: non-finite iterate at step " + std::to_string(k + 1));
    }
    push(X);
  }
  out.output = transposed ? MatrixX<Scalar>(X.transpose()) : std::move(X);
  return out;
}

/// Five-step pre-scaled Taylor Newton-Schulz map.
template <typename Derived>
MatrixX<typename Derived::Scalar> ns5(const Eigen::MatrixBase<Derived>& A) {
  return ns_run(A, NsConfig::ns5()).output;
}

}  // namespace muoneq
