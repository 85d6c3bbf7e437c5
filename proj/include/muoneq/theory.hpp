#pragma once

// Executable forms of the deterministic statements about the method:
// spectral diagnostics, the finite-step Newton-Schulz lower bound, the
// approximation/preconditioning error split, whitening expansions,
// convergence constants, NS5 inexactness, and the alignment inequality.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "muoneq/equilibrate.hpp"
#include "muoneq/linalg.hpp"
#include "muoneq/newton_schulz.hpp"

namespace muoneq {

struct SpectralReport {
  std::vector<double> singular_values;  // nonzero, descending
  double stable_rank = 0;               // ||A||_F^2 / sigma_1^2
  double condition_number = 0;          // sigma_1 / sigma_r
  std::vector<double> kappa_i;          // sigma_1 / sigma_i
  std::vector<double> energy;           // sigma_i^2 / ||A||_F^2
  double entropy = 0;                   // -sum p log p, natural log
};

/// DomainError for the zero matrix.
SpectralReport spectral_report(const Matrix& A);

struct Thm1Bound {
  std::vector<double> bound_per_k;  // k = 0..k_max
  std::vector<double> tau_i;        // log_a(kappa_i sqrt(sr))
  double tau_spread = 0;            // tau_r - tau_1
};

/// (sum_i (1 - a^k / (kappa_i sqrt(sr)))_+^2)^{1/2} / sqrt(r) for k = 0..k_max.
Thm1Bound thm1_bound(const Matrix& G, double a, int k_max);

struct ErrorDecomposition {
  double approx_error = 0;  // ||NS(S(M)) - Orth(S(M))||_F
  double precond_bias = 0;  // ||Orth(S(M)) - Orth(M)||_F
  double total = 0;         // ||NS(S(M)) - Orth(M)||_F
  bool triangle_ok = false;
};

ErrorDecomposition error_decomposition(const Matrix& M, const EquilConfig& equil, const NsConfig& ns);

enum class WhiteningSide { Row, Column, TwoSided };

std::string_view to_string(WhiteningSide side);
/// "row" | "column" | "two-sided"
WhiteningSide parse_whitening_side(std::string_view text);

struct WhiteningReport {
  WhiteningSide side = WhiteningSide::Column;
  /// Column/row norms (one-sided); for two-sided, the diagonal of the scale
  /// on the side whose Gram is expanded.
  Vector scale_diag;
  double gram_residual_norm = 0;  // ||C||_2
  Matrix sylvester_solution;      // L; for two-sided the identity-centered C/2
  double zeroth_residual = 0;     // ||Orth - N||_2
  double first_order_residual = 0;
};

/// Solution of D L + L D = D C D for diagonal D > 0: L_ij = d_i C_ij d_j / (d_i + d_j).
Matrix sylvester_diag(const Vector& d, const Matrix& C);

/// DomainError on rank deficiency (or a zero row/column for two-sided).
WhiteningReport whitening_first_order(const Matrix& M, WhiteningSide side);

/// A one-parameter matrix family whose Gram residual vanishes at s = 0:
/// column: (Q + sE) diag(d); row: diag(d) (Q + sE); two-sided:
/// diag(r) (H + sE) diag(c) with H orthonormal-columned Hadamard and
/// ||r|| ||c|| = rows so the two-sided scaling of the s = 0 member is H.
struct WhiteningFamily {
  WhiteningSide side = WhiteningSide::Column;
  Matrix base;
  Matrix direction;
  Vector left;
  Vector right;

  Matrix at(double s) const;
};

WhiteningFamily make_whitening_family(WhiteningSide side, std::uint64_t seed);

struct WhiteningPoint {
  double s = 0;
  double gram_norm = 0;
  double zeroth_residual = 0;
  double first_order_residual = 0;
};

struct WhiteningStudy {
  WhiteningSide side = WhiteningSide::Column;
  std::vector<WhiteningPoint> points;
  double zeroth_slope = 0;
  double first_order_slope = 0;
};

/// For each target, finds s with ||C(s)||_2 = target (relative 1e-6) and
/// fits log-log slopes of both residuals against the measured ||C||_2.
WhiteningStudy whitening_order_study(WhiteningSide side, std::span<const double> targets, std::uint64_t seed);

/// Least-squares slope of log y against log x.
double log_log_slope(std::span<const double> x, std::span<const double> y);

/// (x+1)(y+1)/(4xy) - (3xy - x - y - 1)/4.
double chi_eps(double rho_r, double rho_c);

struct RcInputs {
  double m = 1;
  double n = 1;
  double g_inf = 1;
  double eps = 1;
  double sigma = 1;
  double l_smooth = 1;
  double a = 0.2;
  double f_gap = 0;
};

struct RcConstants {
  RcInputs inputs;
  double rho_r = 0;
  double rho_c = 0;
  double chi = 0;
  double c1 = 0;
  double c2 = 0;
  /// eps below (4/5) g_inf^2 max(m, n): the floor on chi is not guaranteed.
  bool below_threshold = false;

  /// (f_gap + C1 (1 + ln T) + C2) / (a chi T^{1/4}).
  double rate(double T) const;
};

/// UsageError unless eps > 0 and the other inputs are positive (f_gap >= 0).
RcConstants rc_constants(const RcInputs& in);

struct RInputs {
  double m = 1;
  double n = 1;
  double rho = 0;
  double sigma = 1;
  double l_smooth = 1;
  double a = 0.2;
  double eps_ns = 0;
  double f_gap = 0;
};

struct RConstants {
  RInputs inputs;
  double c1 = 0;
  double c2 = 0;
  double denom = 0;  // a (1 - eps_ns) / sqrt(m) - rho

  /// (f_gap + C1 (1 + ln T) + C2) / (denom T^{1/4}).
  double rate(double T) const;
};

/// DomainError unless 0 <= rho < a (1 - eps_ns) / sqrt(m) and 0 <= eps_ns < 1.
/// eps_ns = 0 gives the exact-polar constants.
RConstants r_constants(const RInputs& in);

struct NsInexactness {
  double eps_ns = 0;       // max ||NS(A) - Orth(A)||_2
  double delta_0 = 0;      // max ||Pi - Y0 Y0^T||_2
  double lemma_bound = 0;  // 1 - sqrt(1 - delta_0^(3^K)), or 1 when delta_0 >= 1
};

/// The bound is the one proved for the Taylor polynomial with max(1, ||.||_F)
/// pre-scaling; other configurations report it for comparison only.
NsInexactness ns_inexactness(std::span<const Matrix> inputs, const NsConfig& ns = NsConfig::ns5());

/// delta for a single input: max_i (1 - s_i^2) over the nonzero singular
/// values s_i of the pre-scaled Y0 (0 for the zero matrix).
double ns_delta0(const Matrix& A, Prescale prescale);

struct AlignmentMargin {
  double lhs = 0;     // <M, Orth(P(M) M)>
  double rhs = 0;     // ||M||_F / sqrt(m)
  double lhs_ns = 0;  // <M, NS5(P(M) M)>
  double rhs_ns = 0;  // (1 - eps_ns) ||M||_F / sqrt(m)
  double eps_ns = 0;  // ||NS5(P(M) M) - Orth(P(M) M)||_2
};

/// P is the epsilon-free row scaler (zero rows stay zero).
AlignmentMargin alignment_margin(const Matrix& M);

}  // namespace muoneq
