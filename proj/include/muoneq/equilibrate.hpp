#pragma once

// Row/column diagonal equilibration applied to the momentum matrix before
// orthogonalization (the RC, R and C maps; None is the identity).

#include <array>
#include <cmath>
#include <string_view>

#include "muoneq/linalg.hpp"

namespace muoneq {

enum class EquilMode { RC, R, C, None };

inline constexpr std::array<EquilMode, 4> kAllEquilModes{EquilMode::RC, EquilMode::R,
                                                         EquilMode::C, EquilMode::None};

std::string_view to_string(EquilMode mode);
/// Lowercase key used in CSV output: rc | r | c | none.
std::string_view mode_label(EquilMode mode);
/// Case-insensitive: "rc", "r", "c", "none".
EquilMode parse_equil_mode(std::string_view text);

struct EquilConfig {
  EquilMode mode = EquilMode::R;
  /// Added to every squared row/column sum before the inverse square root.
  /// Zero selects pseudoinverse semantics: zero rows/columns stay zero.
  double epsilon = 1e-8;
};

template <typename Scalar>
struct EquilOutput {
  MatrixX<Scalar> result;
  VectorX<Scalar> row_scale;  // diag of D_r^{-1/2}, ones when unused
  VectorX<Scalar> col_scale;  // diag of D_c^{-1/2}, ones when unused
};

/// (sum + eps)^{-1/2} entrywise, with 0 where sum + eps == 0.
template <typename Scalar>
VectorX<Scalar> inverse_sqrt_scales(const VectorX<Scalar>& sums, Scalar epsilon) {
  VectorX<Scalar> out(sums.size());
  for (Index i = 0; i < sums.size(); ++i) {
    const Scalar d = sums(i) + epsilon;
    out(i) = d > Scalar(0) ? Scalar(1) / std::sqrt(d) : Scalar(0);
  }
  return out;
}

template <typename Derived>
EquilOutput<typename Derived::Scalar> diag_pre(const Eigen::MatrixBase<Derived>& M,
                                               const EquilConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  if (!(cfg.epsilon >= 0.0)) throw UsageError("diag_pre: epsilon must be >= 0");
  const auto sums = row_col_sq_norms(M);
  const auto eps = static_cast<Scalar>(cfg.epsilon);

  EquilOutput<Scalar> out;
  out.row_scale = VectorX<Scalar>::Ones(M.rows());
  out.col_scale = VectorX<Scalar>::Ones(M.cols());
  if (cfg.mode == EquilMode::RC || cfg.mode == EquilMode::R) {
    out.row_scale = inverse_sqrt_scales<Scalar>(sums.rows, eps);
  }
  if (cfg.mode == EquilMode::RC || cfg.mode == EquilMode::C) {
    out.col_scale = inverse_sqrt_scales<Scalar>(sums.cols, eps);
  }
  switch (cfg.mode) {
    case EquilMode::RC:
      out.result = out.row_scale.asDiagonal() * M * out.col_scale.asDiagonal();
      break;
    case EquilMode::R:
      out.result = out.row_scale.asDiagonal() * M;
      break;
    case EquilMode::C:
      out.result = M * out.col_scale.asDiagonal();
      break;
    case EquilMode::None:
      out.result = M;
      break;
  }
  return out;
}

struct ScalerBounds {
  bool ok = false;
  double min_scale = 0;  // over both row and column scalers
  double max_scale = 0;
  double row_lower = 0;  // (n g^2 + eps)^{-1/2}
  double col_lower = 0;  // (m g^2 + eps)^{-1/2}
  double upper = 0;      // eps^{-1/2}
};

/// Checks that both scalers built from M lie entrywise in
/// [(n g^2 + eps)^{-1/2}, eps^{-1/2}] (rows) and [(m g^2 + eps)^{-1/2}, eps^{-1/2}]
/// (columns). Throws DomainError if some |M_ij| exceeds g_inf.
ScalerBounds scaler_bounds_report(const Matrix& M, double g_inf, double epsilon);

}  // namespace muoneq
