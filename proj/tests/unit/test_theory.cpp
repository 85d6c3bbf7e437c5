#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "muoneq/problems.hpp"
#include "muoneq/rng.hpp"
#include "muoneq/theory.hpp"

using namespace muoneq;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

Matrix diag2(double a, double b) {
  Matrix M = Matrix::Zero(2, 2);
  M(0, 0) = a;
  M(1, 1) = b;
  return M;
}

double measured_error(const Matrix& G, const NsPolynomial& poly, int k) {
  const auto res = ns_run(G, NsConfig{poly, k, Prescale::Frobenius}, true);
  return res.trajectory->per_step_error.back() / std::sqrt(static_cast<double>(svd(G).rank()));
}

}  // namespace

TEST(SpectralReport, Identity) {
  const auto r = spectral_report(Matrix::Identity(2, 2));
  EXPECT_DOUBLE_EQ(r.stable_rank, 2.0);
  EXPECT_DOUBLE_EQ(r.condition_number, 1.0);
  EXPECT_NEAR(r.entropy, std::log(2.0), 1e-15);
}

TEST(SpectralReport, DiagonalTwoOne) {
  const auto r = spectral_report(diag2(2, 1));
  EXPECT_DOUBLE_EQ(r.stable_rank, 1.25);
  EXPECT_DOUBLE_EQ(r.condition_number, 2.0);
  EXPECT_NEAR(r.energy[0], 0.8, 1e-15);
  EXPECT_NEAR(r.energy[1], 0.2, 1e-15);
  const Big h = -(Big(0.8) * log(Big(0.8)) + Big(0.2) * log(Big(0.2)));
  EXPECT_NEAR(r.entropy, static_cast<double>(h), 1e-15);
  EXPECT_NEAR(r.entropy, 0.5004024235, 1e-10);
  EXPECT_DOUBLE_EQ(r.kappa_i[1], 2.0);
}

TEST(SpectralReport, RankOne) {
  Rng rng(1);
  const Matrix A = rng.gaussian(5, 1) * rng.gaussian(1, 4);
  const auto r = spectral_report(A);
  EXPECT_NEAR(r.stable_rank, 1.0, 1e-14);
  EXPECT_EQ(r.singular_values.size(), 1u);
  EXPECT_NEAR(r.entropy, 0.0, 1e-15);
}

TEST(SpectralReport, ZeroIsDomainError) { EXPECT_THROW(spectral_report(Matrix::Zero(2, 2)), DomainError); }

TEST(SpectralReport, EnergySumsToOneAndEntropyIsBounded) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Matrix A = rng.gaussian(2 + static_cast<Index>(rng.below(20)), 2 + static_cast<Index>(rng.below(20)));
    const auto r = spectral_report(A);
    double sum = 0;
    for (double p : r.energy) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-10);
    EXPECT_GE(r.entropy, 0.0);
    EXPECT_LE(r.entropy, std::log(static_cast<double>(r.singular_values.size())) + 1e-12);
    EXPECT_GE(r.stable_rank, 1.0);
    EXPECT_LE(r.stable_rank, static_cast<double>(r.singular_values.size()) + 1e-12);
    EXPECT_NEAR(r.stable_rank, A.squaredNorm() / (r.singular_values[0] * r.singular_values[0]), 1e-12);
  }
}

TEST(Thm1Bound, IllConditionedDiagonalAtStepZero) {
  const Big sr = Big(1) + Big("1e-4");
  const Big t1 = Big(1) - Big(1) / sqrt(sr);
  const Big t2 = Big(1) - Big(1) / (Big(100) * sqrt(sr));
  const double oracle = static_cast<double>(sqrt((t1 * t1 + t2 * t2) / 2));
  const auto b = thm1_bound(diag2(1, 0.01), 15.0 / 8.0, 3);
  EXPECT_NEAR(b.bound_per_k[0], oracle, 1e-14);
  EXPECT_NEAR(b.bound_per_k[0], 0.70004, 1e-5);
}

TEST(Thm1Bound, VanishesOnceEveryHingeClamps) {
  Rng rng(3);
  const Matrix G = rng.gaussian(6, 9);
  const auto rep = spectral_report(G);
  const double a = 15.0 / 8.0;
  const int k = static_cast<int>(std::ceil(std::log(rep.condition_number * std::sqrt(rep.stable_rank)) / std::log(a)));
  const auto b = thm1_bound(G, a, k + 2);
  EXPECT_EQ(b.bound_per_k[static_cast<std::size_t>(k)], 0.0);
  EXPECT_EQ(b.bound_per_k.back(), 0.0);
  for (std::size_t i = 1; i < b.bound_per_k.size(); ++i) EXPECT_LE(b.bound_per_k[i], b.bound_per_k[i - 1]);
}

TEST(Thm1Bound, TauSpreadIsLogKappa) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    EnsembleSpec spec;
    spec.rows = 10;
    spec.cols = 16;
    spec.spectrum_decades = rng.uniform(0, 4);
    const Matrix G = ensemble_member(spec, i);
    for (double a : {15.0 / 8.0, 3.4445}) {
      const auto b = thm1_bound(G, a, 0);
      const double kappa = spectral_report(G).condition_number;
      EXPECT_NEAR(b.tau_spread, std::log(kappa) / std::log(a), 1e-10);
      EXPECT_NEAR(b.tau_i.back() - b.tau_i.front(), b.tau_spread, 1e-12);
    }
  }
}

TEST(Thm1Bound, LowerBoundsTheMeasuredError) {
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    EnsembleSpec spec;
    spec.rows = 4 + static_cast<Index>(rng.below(20));
    spec.cols = 4 + static_cast<Index>(rng.below(20));
    spec.spectrum_decades = rng.uniform(0, 5);
    spec.row_scale_decades = rng.uniform(0, 1);
    spec.seed = rng.next_u64();
    const Matrix G = ensemble_member(spec, 0);
    for (const auto& poly : {NsPolynomial::taylor(), NsPolynomial::practical()}) {
      const auto b = thm1_bound(G, poly.a, 12);
      for (int k = 0; k <= 12; ++k) {
        EXPECT_GE(measured_error(G, poly, k), b.bound_per_k[static_cast<std::size_t>(k)] - 1e-10);
      }
    }
  }
}

TEST(Thm1Bound, RejectsBadArguments) {
  EXPECT_THROW(thm1_bound(Matrix::Zero(2, 2), 1.5, 3), DomainError);
  EXPECT_THROW(thm1_bound(Matrix::Identity(2, 2), 1.0, 3), DomainError);
  EXPECT_THROW(thm1_bound(Matrix::Identity(2, 2), 1.5, -1), UsageError);
}

TEST(ErrorDecomposition, NoneHasNoBias) {
  Rng rng(6);
  const Matrix M = rng.gaussian(7, 11);
  const auto d = error_decomposition(M, {EquilMode::None, 0.0}, NsConfig::ns5());
  EXPECT_EQ(d.precond_bias, 0.0);
  EXPECT_NEAR(d.total, d.approx_error, 1e-15);
  EXPECT_TRUE(d.triangle_ok);
}

TEST(ErrorDecomposition, UnitRowOrthogonalInputHasNoBiasUnderR) {
  Rng rng(7);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(rng.gaussian(6, 6)).householderQ();
  const auto d = error_decomposition(Q, {EquilMode::R, 0.0}, NsConfig::ns5());
  EXPECT_LE(d.precond_bias, 1e-13);
}

TEST(ErrorDecomposition, TriangleHoldsAndPiecesMatchDefinitions) {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    EnsembleSpec spec;
    spec.rows = 12;
    spec.cols = 20;
    spec.spectrum_decades = 2;
    spec.row_scale_decades = 1;
    spec.col_scale_decades = 1;
    spec.seed = rng.next_u64();
    const Matrix M = ensemble_member(spec, 0);
    for (EquilMode mode : kAllEquilModes) {
      const EquilConfig eq{mode, 0.0};
      const auto d = error_decomposition(M, eq, NsConfig::ns5());
      const Matrix S = diag_pre(M, eq).result;
      const Matrix X = ns5(S);
      EXPECT_NEAR(d.approx_error, (X - polar_factor(S)).norm(), 1e-12);
      EXPECT_NEAR(d.precond_bias, (polar_factor(S) - polar_factor(M)).norm(), 1e-12);
      EXPECT_NEAR(d.total, (X - polar_factor(M)).norm(), 1e-12);
      EXPECT_LE(d.total, d.approx_error + d.precond_bias + 1e-9);
      EXPECT_TRUE(d.triangle_ok);
    }
  }
}

TEST(Sylvester, ClosedFormByHand) {
  Vector d(2);
  d << 1, 2;
  Matrix C(2, 2);
  C << 0, 1, 1, 0;
  const Matrix L = sylvester_diag(d, C);
  EXPECT_NEAR(L(0, 1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(L(1, 0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(L(0, 0), 0.0);
  EXPECT_EQ(L(1, 1), 0.0);
}

TEST(Sylvester, SolvesTheEquation) {
  Rng rng(9);
  Vector d(7);
  for (Index i = 0; i < 7; ++i) d(i) = rng.uniform(0.1, 10);
  Matrix C = rng.gaussian(7, 7);
  C = (C + C.transpose()).eval();
  const Matrix L = sylvester_diag(d, C);
  const Matrix D = d.asDiagonal();
  EXPECT_LE((D * L + L * D - D * C * D).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Whitening, OrthonormalColumnsAreExact) {
  Rng rng(10);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(rng.gaussian(9, 4)).householderQ() * Matrix::Identity(9, 4);
  Vector d(4);
  d << 0.5, 2, 7, 1;
  const auto col = whitening_first_order(Q * d.asDiagonal(), WhiteningSide::Column);
  EXPECT_LE(col.gram_residual_norm, 1e-12);
  EXPECT_LE(col.first_order_residual, 1e-9);
  EXPECT_LE(col.zeroth_residual, 1e-9);
  const auto row = whitening_first_order(Matrix(d.asDiagonal() * Q.transpose()), WhiteningSide::Row);
  EXPECT_LE(row.first_order_residual, 1e-9);
}

TEST(Whitening, ScaleDiagonalIsTheColumnNorms) {
  Rng rng(11);
  const Matrix M = rng.gaussian(10, 4);
  const auto rep = whitening_first_order(M, WhiteningSide::Column);
  EXPECT_LE((rep.scale_diag - M.colwise().norm().transpose()).norm(), 1e-14);
  const Matrix N = M * rep.scale_diag.cwiseInverse().asDiagonal();
  const Matrix C = N.transpose() * N - Matrix::Identity(4, 4);
  EXPECT_NEAR(rep.gram_residual_norm, spectral_norm(C), 1e-14);
  EXPECT_LE((rep.sylvester_solution - sylvester_diag(rep.scale_diag, C)).norm(), 1e-14);
  EXPECT_NEAR(rep.zeroth_residual, spectral_norm(Matrix(polar_factor(M) - N)), 1e-13);
}

TEST(Whitening, DomainErrors) {
  Matrix M = Matrix::Ones(5, 3);
  EXPECT_THROW(whitening_first_order(M, WhiteningSide::Column), DomainError);
  Rng rng(12);
  M = rng.gaussian(5, 3);
  M.col(1).setZero();
  EXPECT_THROW(whitening_first_order(M, WhiteningSide::Column), DomainError);
  EXPECT_THROW(whitening_first_order(rng.gaussian(3, 5), WhiteningSide::Column), DomainError);
  EXPECT_THROW(whitening_first_order(rng.gaussian(5, 3), WhiteningSide::Row), DomainError);
}

TEST(Whitening, ResidualOrdersOnConstructedFamilies) {
  std::vector<double> targets;
  for (int i = 0; i <= 4; ++i) targets.push_back(std::pow(10.0, -1.0 - 0.5 * i));
  for (auto side : {WhiteningSide::Row, WhiteningSide::Column, WhiteningSide::TwoSided}) {
    const auto study = whitening_order_study(side, targets, 42);
    EXPECT_GE(study.first_order_slope, 1.8) << to_string(side);
    EXPECT_LE(study.first_order_slope, 2.2) << to_string(side);
    EXPECT_GE(study.zeroth_slope, 0.9) << to_string(side);
    EXPECT_LE(study.zeroth_slope, 1.1) << to_string(side);
    double lo0 = 1e300, hi0 = 0, lo1 = 1e300, hi1 = 0;
    for (const auto& p : study.points) {
      EXPECT_NEAR(p.gram_norm, targets[static_cast<std::size_t>(&p - study.points.data())], 1e-6 * p.gram_norm);
      const double r0 = p.zeroth_residual / p.gram_norm, r1 = p.first_order_residual / (p.gram_norm * p.gram_norm);
      lo0 = std::min(lo0, r0), hi0 = std::max(hi0, r0), lo1 = std::min(lo1, r1), hi1 = std::max(hi1, r1);
    }
    EXPECT_LT(hi0 / lo0, 2.0);
    EXPECT_LT(hi1 / lo1, 2.0);
  }
}

TEST(Whitening, FamilyBaseHasZeroResidual) {
  for (auto side : {WhiteningSide::Row, WhiteningSide::Column, WhiteningSide::TwoSided}) {
    const auto fam = make_whitening_family(side, 7);
    EXPECT_LE(whitening_first_order(fam.at(0.0), side).gram_residual_norm, 1e-12) << to_string(side);
    EXPECT_NEAR(spectral_norm(fam.direction), 1.0, 1e-12);
  }
}

TEST(Whitening, SideNames) {
  EXPECT_EQ(parse_whitening_side("row"), WhiteningSide::Row);
  EXPECT_EQ(parse_whitening_side("column"), WhiteningSide::Column);
  EXPECT_EQ(parse_whitening_side("two-sided"), WhiteningSide::TwoSided);
  EXPECT_THROW(parse_whitening_side("diagonal"), UsageError);
}

TEST(LogLogSlope, ExactPowerLaw) {
  const std::vector<double> x{1, 2, 4, 8}, y{3, 12, 48, 192};
  EXPECT_NEAR(log_log_slope(x, y), 2.0, 1e-14);
}

TEST(Chi, BoundaryAndLimit) {
  EXPECT_NEAR(chi_eps(1.5, 1.5), 1.0 / 144.0, 1e-12);
  EXPECT_NEAR(chi_eps(1.0, 1.0), 1.0, 1e-15);
}

TEST(Chi, DecreasingInEachArgument) {
  const int n = 21;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      const double x = 1.0 + 0.5 * i / (n - 1), y0 = 1.0 + 0.5 * j / (n - 1), y1 = 1.0 + 0.5 * (j + 1) / (n - 1);
      EXPECT_GT(chi_eps(x, y0), chi_eps(x, y1));
      EXPECT_GT(chi_eps(y0, x), chi_eps(y1, x));
    }
  }
}

TEST(RcConstants, RhoMatchesHighPrecision) {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    RcInputs in;
    in.m = 1 + static_cast<double>(rng.below(500));
    in.n = 1 + static_cast<double>(rng.below(500));
    in.g_inf = rng.uniform(0.01, 10);
    in.eps = rng.uniform(1e-3, 1e3);
    const auto k = rc_constants(in);
    const Big rr = sqrt(Big(1) + Big(in.n) * Big(in.g_inf) * Big(in.g_inf) / Big(in.eps));
    const Big rc = sqrt(Big(1) + Big(in.m) * Big(in.g_inf) * Big(in.g_inf) / Big(in.eps));
    EXPECT_NEAR(k.rho_r, static_cast<double>(rr), 4e-16 * k.rho_r);
    EXPECT_NEAR(k.rho_c, static_cast<double>(rc), 4e-16 * k.rho_c);
    EXPECT_EQ(k.below_threshold, in.eps < 0.8 * in.g_inf * in.g_inf * std::max(in.m, in.n));
  }
}

TEST(RcConstants, FloorAtThreshold) {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    RcInputs in;
    in.m = 1 + static_cast<double>(rng.below(4096));
    in.n = 1 + static_cast<double>(rng.below(4096));
    in.g_inf = std::pow(10.0, rng.uniform(-3, 3));
    in.eps = 0.8 * in.g_inf * in.g_inf * std::max(in.m, in.n);
    const auto k = rc_constants(in);
    EXPECT_LE(k.rho_r, 1.5 + 1e-15);
    EXPECT_LE(k.rho_c, 1.5 + 1e-15);
    EXPECT_GE(k.chi, 1.0 / 144.0 - 1e-12);
    EXPECT_FALSE(k.below_threshold);
  }
}

TEST(RcConstants, HandEvaluation) {
  RcInputs in{4, 1, 1, 3.2, 0.5, 2, 0.3, 1.5};
  const auto k = rc_constants(in);
  const double rr = std::sqrt(1 + 1 / 3.2), rc = std::sqrt(1 + 4 / 3.2);
  const double chi = (rr + 1) * (rc + 1) / (4 * rr * rc) - (3 * rr * rc - rr - rc - 1) / 4;
  const double c1 = (0.3 / 2) * (2 * std::sqrt(2.0) * 4 * 0.09 * 1 + 0.25) + 0.3 * 2 * std::pow(chi + rr * rc * 1, 2);
  const double c2 = 0.3 * 0.25 / 2 + 1.5 * 2 * 0.09 * 1;
  EXPECT_NEAR(k.chi, chi, 1e-15);
  EXPECT_NEAR(k.c1, c1, 1e-14);
  EXPECT_NEAR(k.c2, c2, 1e-15);
  EXPECT_NEAR(k.rate(100), (1.5 + c1 * (1 + std::log(100.0)) + c2) / (0.3 * chi * std::pow(100.0, 0.25)), 1e-12);
  EXPECT_TRUE(rc_constants({4, 1, 1, 1.0, 0.5, 2, 0.3, 1.5}).below_threshold);
  EXPECT_THROW(rc_constants({4, 1, 1, 0.0, 0.5, 2, 0.3, 1.5}), UsageError);
}

TEST(RConstants, ScalarHandArithmetic) {
  const auto k = r_constants({1, 1, 0, 1, 1, 0.2, 0, 0});
  EXPECT_NEAR(k.c2, 0.26, 1e-15);
}

TEST(RConstants, ExactPolarReduction) {
  RInputs in{16, 9, 0, 0.7, 3, 0.5, 0, 2};
  const auto k = r_constants(in);
  const double step = 0.5 * 3;
  const double align = 1.0 / 4 + 3;
  EXPECT_NEAR(k.c1, (0.5 / 3) * (2 * std::sqrt(2.0) * 9 * step * step + 0.49) + 0.5 * 3 * align * align, 1e-12);
  EXPECT_NEAR(k.c2, 0.5 * 0.49 / 3 + 1.5 * 3 * step * step, 1e-13);
  EXPECT_NEAR(k.denom, 0.5 / 4, 1e-16);
}

TEST(RConstants, RhoAtTheLimitIsDomainError) {
  const double m = 16, a = 0.8, e = 0.25;
  const double limit = a * (1 - e) / std::sqrt(m);
  EXPECT_THROW(r_constants({m, 4, limit, 1, 1, a, e, 0}), DomainError);
  EXPECT_NO_THROW(r_constants({m, 4, 0.99 * limit, 1, 1, a, e, 0}));
  EXPECT_THROW(r_constants({m, 4, -0.1, 1, 1, a, e, 0}), DomainError);
  EXPECT_THROW(r_constants({m, 4, 0, 1, 1, a, 1.0, 0}), DomainError);
}

TEST(Inexactness, FixedPointAndZero) {
  Matrix one(1, 1);
  one << 1.0;
  const std::vector<Matrix> a{one};
  const auto r = ns_inexactness(a);
  EXPECT_EQ(r.eps_ns, 0.0);
  EXPECT_EQ(r.delta_0, 0.0);
  EXPECT_EQ(r.lemma_bound, 0.0);
  const std::vector<Matrix> z{Matrix::Zero(2, 2)};
  const auto rz = ns_inexactness(z);
  EXPECT_EQ(rz.eps_ns, 0.0);
  EXPECT_EQ(rz.delta_0, 0.0);
}

TEST(Inexactness, LemmaBoundHoldsOnRandomFullRankInputs) {
  Rng rng(15);
  int checked = 0;
  for (int i = 0; i < 60; ++i) {
    EnsembleSpec spec;
    // Frobenius prescaling gives delta_0 >= 1 - 1/rank, so the bound is only
    // informative for small, well-conditioned inputs; a few larger ones too.
    const bool small = i % 6 != 0;
    spec.rows = small ? 2 + static_cast<Index>(rng.below(5)) : 8 + static_cast<Index>(rng.below(30));
    spec.cols = small ? 2 + static_cast<Index>(rng.below(5)) : 8 + static_cast<Index>(rng.below(30));
    spec.spectrum_decades = small ? rng.uniform(0, 0.5) : rng.uniform(0, 1.5);
    spec.seed = rng.next_u64();
    Matrix A = ensemble_member(spec, 0) * std::pow(10.0, rng.uniform(-1, 1.5));
    const std::vector<Matrix> in{A};
    const auto r = ns_inexactness(in);
    EXPECT_LT(r.eps_ns, 1.0);
    EXPECT_NEAR(r.eps_ns, spectral_norm(Matrix(ns5(A) - polar_factor(A))), 1e-15);
    if (r.delta_0 > 0.95) continue;
    ++checked;
    const Big bound = Big(1) - sqrt(Big(1) - pow(Big(r.delta_0), 243));
    EXPECT_NEAR(r.lemma_bound, static_cast<double>(bound), 1e-15);
    EXPECT_LE(r.eps_ns, r.lemma_bound + 1e-6);
  }
  EXPECT_GT(checked, 20);
}

TEST(Inexactness, DeltaIsOrientationIndependent) {
  Rng rng(16);
  const Matrix A = rng.gaussian(5, 12) * 0.1;
  EXPECT_NEAR(ns_delta0(A, Prescale::Max1Frobenius), ns_delta0(Matrix(A.transpose()), Prescale::Max1Frobenius), 1e-14);
  const auto f = svd(A);
  const double s_min = f.sigma(f.rank() - 1) / std::max(1.0, A.norm());
  EXPECT_NEAR(ns_delta0(A, Prescale::Max1Frobenius), 1 - s_min * s_min, 1e-14);
}

TEST(Alignment, IdentityAndZero) {
  const auto r = alignment_margin(Matrix::Identity(4, 4));
  EXPECT_NEAR(r.lhs, 4.0, 1e-14);
  EXPECT_NEAR(r.rhs, 1.0, 1e-15);
  const auto z = alignment_margin(Matrix::Zero(3, 5));
  EXPECT_EQ(z.lhs, 0.0);
  EXPECT_EQ(z.rhs, 0.0);
}

TEST(Alignment, HoldsWithZeroRows) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Index m = 1 + static_cast<Index>(rng.below(40)), n = 1 + static_cast<Index>(rng.below(60));
    Matrix M = rng.gaussian(m, n);
    for (Index r = 0; r < m; ++r) {
      M.row(r) *= std::pow(10.0, rng.uniform(-1.5, 1.5));
      if (rng.below(4) == 0) M.row(r).setZero();
    }
    const auto a = alignment_margin(M);
    EXPECT_GE(a.lhs, a.rhs - 1e-9);
    EXPECT_GE(a.lhs_ns, a.rhs_ns - 1e-9);
    EXPECT_NEAR(a.rhs, M.norm() / std::sqrt(static_cast<double>(m)), 1e-12);
  }
}
