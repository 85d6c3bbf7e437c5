#include "muoneq/theory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "muoneq/rng.hpp"

namespace muoneq {

namespace {

std::vector<double> nonzero_singular_values(const Matrix& A) {
  const auto f = svd(A);
  std::vector<double> out(static_cast<std::size_t>(f.rank()));
  for (Index i = 0; i < f.rank(); ++i) out[static_cast<std::size_t>(i)] = f.sigma(i);
  return out;
}

// 1 - sqrt(1 - x) without cancellation for small x.
double one_minus_sqrt_one_minus(double x) { return x / (1.0 + std::sqrt(1.0 - x)); }

}  // namespace

SpectralReport spectral_report(const Matrix& A) {
  SpectralReport rep;
  rep.singular_values = nonzero_singular_values(A);
  if (rep.singular_values.empty()) throw DomainError("spectral_report: zero matrix has no condition number");
  const double s1 = rep.singular_values.front();
  double total = 0;
  for (double s : rep.singular_values) total += s * s;
  rep.stable_rank = total / (s1 * s1);
  rep.condition_number = s1 / rep.singular_values.back();
  for (double s : rep.singular_values) {
    rep.kappa_i.push_back(s1 / s);
    const double p = s * s / total;
    rep.energy.push_back(p);
    if (p > 0) rep.entropy -= p * std::log(p);
  }
  return rep;
}

Thm1Bound thm1_bound(const Matrix& G, double a, int k_max) {
  if (!(a > 1.0)) throw DomainError("thm1_bound: a must exceed 1");
  if (k_max < 0) throw UsageError("thm1_bound: k_max must be >= 0");
  const auto rep = spectral_report(G);
  const double log_a = std::log(a);
  const double half_log_sr = 0.5 * std::log(rep.stable_rank);
  const auto r = static_cast<double>(rep.singular_values.size());

  Thm1Bound out;
  for (double kappa : rep.kappa_i) out.tau_i.push_back((std::log(kappa) + half_log_sr) / log_a);
  out.tau_spread = out.tau_i.back() - out.tau_i.front();
  for (int k = 0; k <= k_max; ++k) {
    double sum = 0;
    for (double kappa : rep.kappa_i) {
      const double ratio = std::exp(k * log_a - std::log(kappa) - half_log_sr);
      const double hinge = std::max(0.0, 1.0 - ratio);
      sum += hinge * hinge;
    }
    out.bound_per_k.push_back(std::sqrt(sum / r));
  }
  return out;
}

ErrorDecomposition error_decomposition(const Matrix& M, const EquilConfig& equil, const NsConfig& ns) {
  if (M.norm() == 0.0) throw DomainError("error_decomposition: M must be nonzero");
  const Matrix S = diag_pre(M, equil).result;
  const Matrix ns_out = ns_run(S, ns).output;
  const Matrix orth_s = polar_factor(S);
  const Matrix orth_m = equil.mode == EquilMode::None ? orth_s : polar_factor(M);

  ErrorDecomposition out;
  out.approx_error = (ns_out - orth_s).norm();
  out.precond_bias = (orth_s - orth_m).norm();
  out.total = (ns_out - orth_m).norm();
  out.triangle_ok = out.total <= out.approx_error + out.precond_bias + 1e-9;
  return out;
}

std::string_view to_string(WhiteningSide side) {
  switch (side) {
    case WhiteningSide::Row: return "row";
    case WhiteningSide::Column: return "column";
    case WhiteningSide::TwoSided: return "two-sided";
  }
  return "?";
}

WhiteningSide parse_whitening_side(std::string_view text) {
  std::string lower(text);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "row") return WhiteningSide::Row;
  if (lower == "column" || lower == "col") return WhiteningSide::Column;
  if (lower == "two-sided" || lower == "two_sided" || lower == "rc") return WhiteningSide::TwoSided;
  throw UsageError("unknown whitening side '" + std::string(text) + "' (expected row|column|two-sided)");
}

Matrix sylvester_diag(const Vector& d, const Matrix& C) {
  if (C.rows() != d.size() || C.cols() != d.size()) throw UsageError("sylvester_diag: shape mismatch");
  Matrix L(C.rows(), C.cols());
  for (Index j = 0; j < C.cols(); ++j) {
    for (Index i = 0; i < C.rows(); ++i) L(i, j) = d(i) * C(i, j) * d(j) / (d(i) + d(j));
  }
  return L;
}

namespace {

void require_rank(const Matrix& M, Index needed, const char* what) {
  if (svd(M).rank() < needed) throw DomainError(std::string("whitening_first_order: ") + what);
}

WhiteningReport whiten_column(const Matrix& M) {
  if (M.rows() < M.cols()) throw DomainError("whitening_first_order: column side needs rows >= cols");
  const Vector d = M.colwise().norm().transpose();
  if ((d.array() == 0.0).any()) throw DomainError("whitening_first_order: zero column");
  require_rank(M, M.cols(), "matrix is not of full column rank");
  const Matrix N = M * d.cwiseInverse().asDiagonal();
  const Matrix C = N.transpose() * N - Matrix::Identity(M.cols(), M.cols());
  const Matrix orth = polar_factor(M);

  WhiteningReport rep;
  rep.side = WhiteningSide::Column;
  rep.scale_diag = d;
  rep.gram_residual_norm = spectral_norm(C);
  rep.sylvester_solution = sylvester_diag(d, C);
  rep.zeroth_residual = spectral_norm(orth - N);
  const Matrix first = N - N * rep.sylvester_solution * d.cwiseInverse().asDiagonal();
  rep.first_order_residual = spectral_norm(orth - first);
  return rep;
}

WhiteningReport whiten_row(const Matrix& M) {
  if (M.rows() > M.cols()) throw DomainError("whitening_first_order: row side needs rows <= cols");
  const Vector d = M.rowwise().norm();
  if ((d.array() == 0.0).any()) throw DomainError("whitening_first_order: zero row");
  require_rank(M, M.rows(), "matrix is not of full row rank");
  const Matrix N = d.cwiseInverse().asDiagonal() * M;
  const Matrix C = N * N.transpose() - Matrix::Identity(M.rows(), M.rows());
  const Matrix orth = polar_factor(M);

  WhiteningReport rep;
  rep.side = WhiteningSide::Row;
  rep.scale_diag = d;
  rep.gram_residual_norm = spectral_norm(C);
  rep.sylvester_solution = sylvester_diag(d, C);
  rep.zeroth_residual = spectral_norm(orth - N);
  const Matrix first = N - d.cwiseInverse().asDiagonal() * rep.sylvester_solution * N;
  rep.first_order_residual = spectral_norm(orth - first);
  return rep;
}

WhiteningReport whiten_two_sided(const Matrix& M) {
  const auto sums = row_col_sq_norms(M);
  if ((sums.rows.array() == 0.0).any() || (sums.cols.array() == 0.0).any()) {
    throw DomainError("whitening_first_order: two-sided needs every row and column nonzero");
  }
  const bool column = M.rows() >= M.cols();
  require_rank(M, std::min(M.rows(), M.cols()), "matrix is rank deficient");
  const Matrix H = diag_pre(M, EquilConfig{EquilMode::RC, 0.0}).result;
  const Matrix orth = polar_factor(H);

  WhiteningReport rep;
  rep.side = WhiteningSide::TwoSided;
  Matrix C;
  Matrix first;
  if (column) {
    C = H.transpose() * H - Matrix::Identity(M.cols(), M.cols());
    rep.scale_diag = inverse_sqrt_scales<double>(sums.cols, 0.0);
    first = H - 0.5 * H * C;
  } else {
    C = H * H.transpose() - Matrix::Identity(M.rows(), M.rows());
    rep.scale_diag = inverse_sqrt_scales<double>(sums.rows, 0.0);
    first = H - 0.5 * C * H;
  }
  rep.gram_residual_norm = spectral_norm(C);
  rep.sylvester_solution = 0.5 * C;
  rep.zeroth_residual = spectral_norm(orth - H);
  rep.first_order_residual = spectral_norm(orth - first);
  return rep;
}

// Columns 0..cols-1 of the normalized Sylvester-Hadamard matrix of order rows.
Matrix hadamard_columns(Index rows, Index cols) {
  Matrix H = Matrix::Ones(1, 1);
  while (H.rows() < rows) {
    const Index k = H.rows();
    Matrix next(2 * k, 2 * k);
    next << H, H, H, -H;
    H = std::move(next);
  }
  return H.leftCols(cols) / std::sqrt(static_cast<double>(rows));
}

Vector log_uniform(Rng& rng, Index size, double decades) {
  Vector out(size);
  for (Index i = 0; i < size; ++i) out(i) = std::pow(10.0, decades * rng.uniform());
  return out;
}

}  // namespace

WhiteningReport whitening_first_order(const Matrix& M, WhiteningSide side) {
  detail::require_finite(M, "whitening_first_order");
  switch (side) {
    case WhiteningSide::Column: return whiten_column(M);
    case WhiteningSide::Row: return whiten_row(M);
    case WhiteningSide::TwoSided: return whiten_two_sided(M);
  }
  throw UsageError("whitening_first_order: bad side");
}

Matrix WhiteningFamily::at(double s) const {
  const Matrix core = base + s * direction;
  return left.asDiagonal() * core * right.asDiagonal();
}

WhiteningFamily make_whitening_family(WhiteningSide side, std::uint64_t seed) {
  constexpr Index kLong = 24;
  constexpr Index kShort = 8;
  constexpr Index kHadamard = 16;
  Rng rng(seed);
  WhiteningFamily fam;
  fam.side = side;
  switch (side) {
    case WhiteningSide::Column: {
      fam.base = Eigen::HouseholderQR<Matrix>(rng.gaussian(kLong, kShort)).householderQ() *
                 Matrix::Identity(kLong, kShort);
      fam.left = Vector::Ones(kLong);
      fam.right = log_uniform(rng, kShort, 1.0);
      break;
    }
    case WhiteningSide::Row: {
      const Matrix Q = Eigen::HouseholderQR<Matrix>(rng.gaussian(kLong, kShort)).householderQ() *
                       Matrix::Identity(kLong, kShort);
      fam.base = Q.transpose();
      fam.left = log_uniform(rng, kShort, 1.0);
      fam.right = Vector::Ones(kLong);
      break;
    }
    case WhiteningSide::TwoSided: {
      fam.base = hadamard_columns(kHadamard, kShort);
      fam.left = log_uniform(rng, kHadamard, 1.0);
      fam.right = log_uniform(rng, kShort, 1.0);
      const double rows = static_cast<double>(kHadamard);
      fam.left *= std::sqrt(rows) / fam.left.norm();
      fam.right *= std::sqrt(rows) / fam.right.norm();
      break;
    }
  }
  fam.direction = rng.gaussian(fam.base.rows(), fam.base.cols());
  fam.direction /= spectral_norm(fam.direction);
  return fam;
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("log_log_slope: need >= 2 paired points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log_log_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw DomainError("log_log_slope: x values are all equal");
  return sxy / sxx;
}

WhiteningStudy whitening_order_study(WhiteningSide side, std::span<const double> targets, std::uint64_t seed) {
  const auto fam = make_whitening_family(side, seed);
  WhiteningStudy study;
  study.side = side;
  std::vector<double> gram, zeroth, first;
  for (double target : targets) {
    if (!(target > 0)) throw UsageError("whitening_order_study: targets must be positive");
    // ||C(s)||_2 is close to linear in s near 0; rescale s until it lands.
    double s = target;
    WhiteningReport rep;
    for (int iter = 0; iter < 100; ++iter) {
      rep = whitening_first_order(fam.at(s), side);
      const double ratio = target / rep.gram_residual_norm;
      if (std::abs(ratio - 1.0) < 1e-6) break;
      s *= ratio;
    }
    study.points.push_back({s, rep.gram_residual_norm, rep.zeroth_residual, rep.first_order_residual});
    gram.push_back(rep.gram_residual_norm);
    zeroth.push_back(rep.zeroth_residual);
    first.push_back(rep.first_order_residual);
  }
  study.zeroth_slope = log_log_slope(gram, zeroth);
  study.first_order_slope = log_log_slope(gram, first);
  return study;
}

double chi_eps(double rho_r, double rho_c) {
  return (rho_r + 1.0) * (rho_c + 1.0) / (4.0 * rho_r * rho_c) -
         (3.0 * rho_r * rho_c - rho_r - rho_c - 1.0) / 4.0;
}

double RcConstants::rate(double T) const {
  if (!(T >= 1)) throw UsageError("rate: T must be >= 1");
  return (inputs.f_gap + c1 * (1.0 + std::log(T)) + c2) / (inputs.a * chi * std::pow(T, 0.25));
}

RcConstants rc_constants(const RcInputs& in) {
  if (!(in.eps > 0)) throw UsageError("rc_constants: eps must be > 0");
  if (!(in.m > 0 && in.n > 0 && in.g_inf > 0 && in.sigma > 0 && in.l_smooth > 0 && in.a > 0)) {
    throw UsageError("rc_constants: m, n, g_inf, sigma, L and a must be positive");
  }
  if (!(in.f_gap >= 0)) throw UsageError("rc_constants: f_gap must be >= 0");
  RcConstants out;
  out.inputs = in;
  const double g2 = in.g_inf * in.g_inf;
  out.rho_r = std::sqrt(1.0 + in.n * g2 / in.eps);
  out.rho_c = std::sqrt(1.0 + in.m * g2 / in.eps);
  out.chi = chi_eps(out.rho_r, out.rho_c);
  // A few ulps of slack so eps set exactly at the threshold is not flagged.
  out.below_threshold = in.eps < 0.8 * g2 * std::max(in.m, in.n) * (1.0 - 1e-14);

  const double a = in.a;
  const double L = in.l_smooth;
  const double s2 = in.sigma * in.sigma;
  const double lead = out.chi + out.rho_r * out.rho_c * std::sqrt(in.n);
  out.c1 = (a / L) * (2.0 * std::sqrt(2.0) * L * L * a * a * in.n + s2) + a * L * lead * lead;
  out.c2 = a * s2 / L + 1.5 * L * a * a * in.n;
  return out;
}

double RConstants::rate(double T) const {
  if (!(T >= 1)) throw UsageError("rate: T must be >= 1");
  return (inputs.f_gap + c1 * (1.0 + std::log(T)) + c2) / (denom * std::pow(T, 0.25));
}

RConstants r_constants(const RInputs& in) {
  if (!(in.m > 0 && in.n > 0 && in.sigma > 0 && in.l_smooth > 0 && in.a > 0)) {
    throw UsageError("r_constants: m, n, sigma, L and a must be positive");
  }
  if (!(in.f_gap >= 0)) throw UsageError("r_constants: f_gap must be >= 0");
  if (!(in.eps_ns >= 0 && in.eps_ns < 1)) {
    throw DomainError("r_constants: need 0 <= eps_ns < 1");
  }
  const double limit = in.a * (1.0 - in.eps_ns) / std::sqrt(in.m);
  if (!(in.rho >= 0 && in.rho < limit)) {
    throw DomainError("r_constants: need 0 <= rho < a(1 - eps_ns)/sqrt(m) = " + std::to_string(limit) +
                      ", got rho = " + std::to_string(in.rho));
  }
  RConstants out;
  out.inputs = in;
  const double a = in.a;
  const double L = in.l_smooth;
  const double s2 = in.sigma * in.sigma;
  const double step = a * (1.0 + in.eps_ns) * std::sqrt(in.n) + in.rho;
  const double align = (1.0 - in.eps_ns) / std::sqrt(in.m) + (1.0 + in.eps_ns) * std::sqrt(in.n);
  out.c1 = (a / L) * (2.0 * std::sqrt(2.0) * L * L * step * step + s2) + a * L * align * align;
  out.c2 = a * s2 / L + 1.5 * L * step * step;
  out.denom = limit - in.rho;
  return out;
}

double ns_delta0(const Matrix& A, Prescale prescale) {
  const auto sigma = nonzero_singular_values(A);
  if (sigma.empty()) return 0.0;
  const double alpha = detail::ns_prescale(A.norm(), prescale);
  double delta = 0;
  for (double s : sigma) {
    const double y = s / alpha;
    delta = std::max(delta, std::abs(1.0 - y * y));
  }
  return delta;
}

NsInexactness ns_inexactness(std::span<const Matrix> inputs, const NsConfig& ns) {
  NsInexactness out;
  for (const auto& A : inputs) {
    detail::require_finite(A, "ns_inexactness");
    const Matrix gap = ns_run(A, ns).output - polar_factor(A);
    out.eps_ns = std::max(out.eps_ns, spectral_norm(gap));
    out.delta_0 = std::max(out.delta_0, ns_delta0(A, ns.prescale));
  }
  if (out.delta_0 >= 1.0) {
    out.lemma_bound = 1.0;
  } else {
    const double power = std::pow(3.0, ns.steps);
    out.lemma_bound = one_minus_sqrt_one_minus(std::pow(out.delta_0, power));
  }
  return out;
}

AlignmentMargin alignment_margin(const Matrix& M) {
  detail::require_finite(M, "alignment_margin");
  const Matrix PM = diag_pre(M, EquilConfig{EquilMode::R, 0.0}).result;
  const Matrix orth = polar_factor(PM);
  const Matrix ns = ns5(PM);
  const double scale = M.norm() / std::sqrt(static_cast<double>(M.rows()));

  AlignmentMargin out;
  out.lhs = frobenius_inner(M, orth);
  out.rhs = scale;
  out.lhs_ns = frobenius_inner(M, ns);
  out.eps_ns = spectral_norm(ns - orth);
  out.rhs_ns = (1.0 - out.eps_ns) * scale;
  return out;
}

}  // namespace muoneq
