#pragma once

// Ensemble experiments behind the command-line subcommands. Each returns plain
// records so both the CLI and the acceptance suite can consume them.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "muoneq/equilibrate.hpp"
#include "muoneq/io.hpp"
#include "muoneq/newton_schulz.hpp"
#include "muoneq/optimizer.hpp"
#include "muoneq/problems.hpp"

namespace muoneq {

using Shape = std::pair<Index, Index>;

/// "64x64,64x256" -> {{64,64},{64,256}}.
std::vector<Shape> parse_shapes(const std::string& text);
std::string shape_name(const Shape& shape);

inline const std::vector<Shape> kDeskShapes{{64, 64}, {64, 256}, {256, 64}, {256, 256}};

struct EnsembleOptions {
  std::vector<Shape> shapes = kDeskShapes;
  double spectrum_decades = 2.0;
  double imbalance_decades = 1.5;
  Index count = 50;  // per shape
  std::uint64_t seed = 42;
};

/// Members in (shape, index) order; shape s draws from derive_seed(seed, s).
std::vector<Matrix> ensemble_matrices(const EnsembleOptions& opts);
/// Shape index of each member, parallel to ensemble_matrices.
std::vector<std::size_t> ensemble_shape_ids(const EnsembleOptions& opts);
/// `total` members split across the shapes as evenly as possible (earlier
/// shapes take the remainder); opts.count is ignored.
std::vector<Matrix> ensemble_split(const EnsembleOptions& opts, Index total);

// --- NS sweep -------------------------------------------------------------

struct SweepOptions {
  EnsembleOptions ensemble;
  int k_max = 10;
  NsConfig ns{NsPolynomial::practical(), 0, Prescale::Frobenius};  // steps ignored
  double epsilon = 0.0;
};

struct SweepSummary {
  std::string shape;
  std::string mode;
  std::int64_t k = 0;
  double median_error = 0;
  double median_kappa_raw = 0;
  double median_kappa_post = 0;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<SweepSummary> summary;
};

/// Relative error ||X_k - Orth(S(M))||_F / sqrt(rank) of the NS iterates on
/// S(M) for every member, every mode and k = 0..k_max.
SweepResult run_ns_sweep(const SweepOptions& opts);

// --- bound audit ------------------------------------------------------------

struct BoundRow {
  std::int64_t matrix_id = 0;
  std::int64_t k = 0;
  double measured = 0;
  double bound = 0;
};

struct BoundAudit {
  std::vector<BoundRow> rows;
  std::int64_t violations = 0;
  double worst_margin = 0;        // min measured - bound
  double worst_tau_gap = 0;       // max |tau_r - tau_1 - log_a kappa|
  std::int64_t tau_violations = 0;
};

/// Frobenius-prescaled NS with the given polynomial on each matrix.
BoundAudit run_bound_audit(const std::vector<Matrix>& mats, const NsPolynomial& poly, int k_max,
                           double tolerance = 1e-10);

// --- alignment audit ----------------------------------------------------------

struct AlignRow {
  std::int64_t matrix_id = 0;
  Index rows = 0;
  Index cols = 0;
  Index zero_rows = 0;
  double lhs = 0, rhs = 0, lhs_ns = 0, rhs_ns = 0, eps_ns = 0;
};

struct AlignAudit {
  std::vector<AlignRow> rows;
  std::int64_t violations = 0;
};

/// Random shapes up to max_rows x max_cols, row scales over 3 decades, and
/// zero rows planted in roughly a third of the members.
std::vector<Matrix> alignment_matrices(Index count, Index max_rows, Index max_cols, std::uint64_t seed);
AlignAudit run_align_audit(const std::vector<Matrix>& mats, double tolerance = 1e-9);

// --- decomposition ------------------------------------------------------------

struct DecomposeRow {
  std::int64_t matrix_id = 0;
  std::string mode;
  double approx_error = 0, precond_bias = 0, total = 0;
  bool triangle_ok = false;
};

struct DecomposeAudit {
  std::vector<DecomposeRow> rows;
  std::int64_t violations = 0;  // triangle failures or nonzero bias under None
};

DecomposeAudit run_decompose(const std::vector<Matrix>& mats, const std::vector<EquilMode>& modes,
                             const NsConfig& ns, double epsilon);

// --- training -------------------------------------------------------------------

/// Block means of the mini-batch loss over consecutive windows.
std::vector<double> smoothed_loss(const Trace& trace, std::size_t window);
bool non_increasing(const std::vector<double>& values);

/// Largest recorded ||O_t - Orth(M_hat_t)||_2 over every slot and step
/// (requires RunOptions::measure_ns_gap).
double measured_eps_ns(const Trace& trace);

template <typename T>
T median(std::vector<T> v) {
  if (v.empty()) throw UsageError("median of an empty set");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  T hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const T lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2;
}

}  // namespace muoneq
