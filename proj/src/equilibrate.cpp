#include "muoneq/equilibrate.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>

namespace muoneq {

std::string_view to_string(EquilMode mode) {
  switch (mode) {
    case EquilMode::RC: return "RC";
    case EquilMode::R: return "R";
    case EquilMode::C: return "C";
    case EquilMode::None: return "None";
  }
  return "?";
}

std::string_view mode_label(EquilMode mode) {
  switch (mode) {
    case EquilMode::RC: return "rc";
    case EquilMode::R: return "r";
    case EquilMode::C: return "c";
    case EquilMode::None: return "none";
  }
  return "?";
}

EquilMode parse_equil_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "rc") return EquilMode::RC;
  if (lower == "r") return EquilMode::R;
  if (lower == "c") return EquilMode::C;
  if (lower == "none") return EquilMode::None;
  throw UsageError("unknown equilibration mode '" + std::string(text) + "' (expected rc|r|c|none)");
}

ScalerBounds scaler_bounds_report(const Matrix& M, double g_inf, double epsilon) {
  if (!(g_inf > 0.0)) throw UsageError("scaler_bounds_report: g_inf must be > 0");
  if (!(epsilon > 0.0)) throw UsageError("scaler_bounds_report: epsilon must be > 0");
  for (Index j = 0; j < M.cols(); ++j) {
    for (Index i = 0; i < M.rows(); ++i) {
      if (!(std::abs(M(i, j)) <= g_inf)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "scaler_bounds_report: |M(" << i << "," << j << ")| = " << std::abs(M(i, j))
            << " exceeds g_inf = " << g_inf;
        throw DomainError(msg.str());
      }
    }
  }
  const auto sums = row_col_sq_norms(M);
  const Vector p = inverse_sqrt_scales<double>(sums.rows, epsilon);
  const Vector q = inverse_sqrt_scales<double>(sums.cols, epsilon);
  const double m = static_cast<double>(M.rows());
  const double n = static_cast<double>(M.cols());

  ScalerBounds out;
  out.row_lower = 1.0 / std::sqrt(n * g_inf * g_inf + epsilon);
  out.col_lower = 1.0 / std::sqrt(m * g_inf * g_inf + epsilon);
  out.upper = 1.0 / std::sqrt(epsilon);
  out.min_scale = std::min(p.minCoeff(), q.minCoeff());
  out.max_scale = std::max(p.maxCoeff(), q.maxCoeff());
  out.ok = p.minCoeff() >= out.row_lower && p.maxCoeff() <= out.upper &&
           q.minCoeff() >= out.col_lower && q.maxCoeff() <= out.upper;
  return out;
}

}  // namespace muoneq
