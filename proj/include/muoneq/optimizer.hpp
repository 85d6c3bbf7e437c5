#pragma once

// The MuonEq step: momentum (optionally the Nesterov EMA-buffer lookahead),
// diagonal equilibration, Newton-Schulz orthogonalization, and the scaled
// update with decoupled weight decay. Also the training loop used by the
// experiments and the weight-decay envelope audit.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "muoneq/equilibrate.hpp"
#include "muoneq/linalg.hpp"
#include "muoneq/newton_schulz.hpp"
#include "muoneq/problems.hpp"

namespace muoneq {

namespace schedule {

struct Constant {
  double value = 0;
};
/// coef * t^exponent
struct Power {
  double coef = 1;
  double exponent = 0;
};
/// t^{-3/4}
struct TheoryLr {};
/// 1 - t^{-1/2}; zero at t = 1.
struct TheoryBeta {};
/// rho t^{-1/4} / (x1_norm + 4 a (1 + eps_ns) sqrt(n)). Negative x1_norm,
/// n_dim or a_scale mean "resolve from the parameter" (see resolve_for_param).
struct TheoryWd {
  double rho = 0;
  double eps_ns = 0;
  double x1_norm = -1;
  double n_dim = -1;
  double a_scale = -1;
};
/// Linear warmup to peak over warmup_steps, cosine decay to 0 at total_steps.
struct WarmupCosine {
  double peak = 0;
  long warmup_steps = 0;
  long total_steps = 1;
};

}  // namespace schedule

using ScheduleSpec = std::variant<schedule::Constant, schedule::Power, schedule::TheoryLr,
                                  schedule::TheoryBeta, schedule::TheoryWd, schedule::WarmupCosine>;

/// Closed-form value at step t >= 1 (UsageError otherwise).
double schedule_eval(const ScheduleSpec& spec, long t);

enum class Orthogonalizer { NewtonSchulz, ExactPolar };

struct OptConfig {
  EquilConfig equil{};
  NsConfig ns = NsConfig::ns5();
  Orthogonalizer orth = Orthogonalizer::NewtonSchulz;
  bool nesterov = false;
  ScheduleSpec lr = schedule::TheoryLr{};
  ScheduleSpec beta = schedule::TheoryBeta{};
  ScheduleSpec weight_decay = schedule::Constant{0.0};
  /// Update scale a; unset means 0.2 sqrt(max(m, n)) for each parameter.
  std::optional<double> scale;
};

/// 0.2 sqrt(max(rows, cols)).
double muon_default_scale(Index rows, Index cols);
double update_scale(const OptConfig& cfg, Index rows, Index cols);

/// Copy of cfg with every "auto" TheoryWd field filled from X1's norm and shape.
OptConfig resolve_for_param(const OptConfig& cfg, const Matrix& x1);

struct OptState {
  Matrix param;
  Matrix momentum;
  long step = 1;

  explicit OptState(Matrix x1) : param(std::move(x1)), momentum(Matrix::Zero(param.rows(), param.cols())) {}
};

struct StepOptions {
  bool keep_equil = false;
  /// Compute ||O_t||_2 (one SVD).
  bool spectral = false;
  /// Compute ||O_t - Orth(M_hat_t)||_2 (one SVD).
  bool ns_gap = false;
};

struct StepReport {
  long t = 0;
  double lr = 0;
  double beta = 0;
  double weight_decay = 0;
  double scale = 0;
  double grad_norm = 0;
  double momentum_norm = 0;
  double param_norm = 0;   // ||X_t||_F before the update
  double update_norm = 0;  // ||X_{t+1} - X_t||_F
  double o_frobenius = 0;
  std::optional<double> o_spectral;
  std::optional<double> ns_gap;
  std::optional<EquilOutput<double>> equil_out;
};

/// One step of the algorithm on `state` (advanced in place).
StepReport step(OptState& state, const Matrix& grad, const OptConfig& cfg, const StepOptions& opts = {});

struct RunOptions {
  long steps = 1;
  std::uint64_t seed = 42;
  /// Full-data loss/gradient every this many steps (and at t = 1 and the end).
  long eval_interval = 1;
  /// Store X_t every this many steps; 0 disables.
  long snapshot_interval = 0;
  bool measure_ns_gap = false;
};

struct SlotRecord {
  double lr = 0;
  double beta = 0;
  double weight_decay = 0;
  double scale = 0;
  double param_norm = 0;
  double update_norm = 0;
  double o_frobenius = 0;
  std::optional<double> ns_gap;
};

struct StepRecord {
  long t = 0;
  double loss = 0;       // mini-batch loss at X_t
  double grad_norm = 0;  // mini-batch gradient norm (all slots)
  std::optional<double> full_loss;
  std::optional<double> full_grad_norm;
  std::vector<SlotRecord> slots;
};

struct Snapshot {
  long t = 0;
  std::vector<Matrix> params;
};

struct Trace {
  std::vector<StepRecord> steps;
  std::vector<Snapshot> snapshots;
  std::vector<OptConfig> slot_configs;  // resolved per parameter
  std::vector<std::pair<Index, Index>> slot_shapes;
  std::vector<double> x1_norms;
  double final_full_loss = 0;
  double final_full_grad_norm = 0;
  std::vector<Matrix> final_params;
};

/// Applies `step` opts.steps times on mini-batch gradients sampled with
/// Rng(opts.seed). Deterministic given (problem, cfg, opts).
Trace run(const Problem& problem, const OptConfig& cfg, const RunOptions& opts);

struct EnvelopeReport {
  bool ok = false;
  double max_lambda_x = 0;     // max_t lambda_t ||X_t||_F
  double max_step_ratio = 0;   // max_t ||X_{t+1} - X_t||_F / ((a(1+eps)sqrt(n) + rho) eta_t)
  double max_lambda_ratio = 0; // max_t lambda_t / (rho t^{-1/4} / (||X_1|| + 4a(1+eps)sqrt(n)))
  long first_violation = -1;
};

/// Checks lambda_t ||X_t||_F <= rho and ||X_{t+1} - X_t||_F <= (a(1+eps_ns)sqrt(n) + rho) eta_t
/// at every recorded step (slack 1e-9), together with the weight-decay schedule
/// hypothesis lambda_t <= rho t^{-1/4} / (||X_1||_F + 4a(1+eps_ns)sqrt(n)).
/// The trace must come from theory lr/beta and a TheoryWd schedule with this rho.
EnvelopeReport wd_envelope_check(const Trace& trace, const OptConfig& cfg, double rho, double eps_ns);

}  // namespace muoneq
