#include "muoneq/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace muoneq {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void check_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw UsageError(std::string("schedule: ") + what + " evaluated to an invalid value");
  }
}

}  // namespace

double schedule_eval(const ScheduleSpec& spec, long t) {
  if (t < 1) throw UsageError("schedule_eval: t must be >= 1, got " + std::to_string(t));
  const double td = static_cast<double>(t);
  const double value = std::visit(
      Overloaded{
          [](const schedule::Constant& s) { return s.value; },
          [&](const schedule::Power& s) { return s.coef * std::pow(td, s.exponent); },
          [&](const schedule::TheoryLr&) { return std::pow(td, -0.75); },
          [&](const schedule::TheoryBeta&) { return t == 1 ? 0.0 : 1.0 - 1.0 / std::sqrt(td); },
          [&](const schedule::TheoryWd& s) {
            if (s.x1_norm < 0 || s.n_dim < 0 || s.a_scale < 0) {
              throw UsageError("schedule_eval: theory weight decay has unresolved fields");
            }
            const double denom = s.x1_norm + 4.0 * s.a_scale * (1.0 + s.eps_ns) * std::sqrt(s.n_dim);
            if (s.rho == 0.0) return 0.0;
            return s.rho * std::pow(td, -0.25) / denom;
          },
          [&](const schedule::WarmupCosine& s) {
            if (s.total_steps < 1 || s.warmup_steps < 0) {
              throw UsageError("schedule_eval: warmup_cosine needs total_steps >= 1 and warmup_steps >= 0");
            }
            if (t <= s.warmup_steps) return s.peak * td / static_cast<double>(s.warmup_steps);
            if (t >= s.total_steps) return t == s.warmup_steps + 1 ? s.peak : 0.0;
            // Peak at the first post-warmup step, zero at total_steps.
            const double span = static_cast<double>(s.total_steps - s.warmup_steps - 1);
            const double progress = static_cast<double>(t - s.warmup_steps - 1) / span;
            return 0.5 * s.peak * (1.0 + std::cos(std::numbers::pi * progress));
          },
      },
      spec);
  check_nonnegative(value, "value");
  return value;
}

double muon_default_scale(Index rows, Index cols) {
  return 0.2 * std::sqrt(static_cast<double>(std::max(rows, cols)));
}

double update_scale(const OptConfig& cfg, Index rows, Index cols) {
  const double a = cfg.scale ? *cfg.scale : muon_default_scale(rows, cols);
  if (!(a > 0.0)) throw UsageError("update scale a must be > 0");
  return a;
}

OptConfig resolve_for_param(const OptConfig& cfg, const Matrix& x1) {
  OptConfig out = cfg;
  if (auto* wd = std::get_if<schedule::TheoryWd>(&out.weight_decay)) {
    if (wd->x1_norm < 0) wd->x1_norm = x1.norm();
    // ||O_t||_F <= (1 + eps_ns) sqrt(rank), so the smaller dimension suffices.
    if (wd->n_dim < 0) wd->n_dim = static_cast<double>(std::min(x1.rows(), x1.cols()));
    if (wd->a_scale < 0) wd->a_scale = update_scale(cfg, x1.rows(), x1.cols());
  }
  return out;
}

StepReport step(OptState& state, const Matrix& grad, const OptConfig& cfg, const StepOptions& opts) {
  if (grad.rows() != state.param.rows() || grad.cols() != state.param.cols()) {
    throw UsageError("step: gradient is " + std::to_string(grad.rows()) + "x" +
                     std::to_string(grad.cols()) + " but the parameter is " +
                     std::to_string(state.param.rows()) + "x" + std::to_string(state.param.cols()));
  }
  if (state.step < 1) throw UsageError("step: step count must be >= 1");
  const long t = state.step;

  StepReport report;
  report.t = t;
  report.beta = schedule_eval(cfg.beta, t);
  report.lr = schedule_eval(cfg.lr, t);
  report.weight_decay = schedule_eval(cfg.weight_decay, t);
  report.scale = update_scale(cfg, state.param.rows(), state.param.cols());
  report.grad_norm = grad.norm();
  report.param_norm = state.param.norm();

  state.momentum = report.beta * state.momentum + (1.0 - report.beta) * grad;
  report.momentum_norm = state.momentum.norm();

  Matrix lookahead;
  if (cfg.nesterov) {
    const double next_beta = schedule_eval(cfg.beta, t + 1);
    lookahead = next_beta * state.momentum + (1.0 - next_beta) * grad;
  }
  const Matrix& fed = cfg.nesterov ? lookahead : state.momentum;

  auto equil = diag_pre(fed, cfg.equil);
  Matrix O;
  try {
    O = cfg.orth == Orthogonalizer::NewtonSchulz ? ns_run(equil.result, cfg.ns).output
                                                 : polar_factor(equil.result);
  } catch (const NumericalError& e) {
    throw NumericalError("step " + std::to_string(t) + ": " + e.what());
  }
  report.o_frobenius = O.norm();
  if (opts.spectral) report.o_spectral = spectral_norm(O);
  if (opts.ns_gap) report.ns_gap = spectral_norm(O - polar_factor(equil.result));

  Matrix next = (1.0 - report.weight_decay * report.lr) * state.param - report.scale * report.lr * O;
  report.update_norm = (next - state.param).norm();
  state.param = std::move(next);
  state.step = t + 1;
  if (opts.keep_equil) report.equil_out = std::move(equil);
  return report;
}

namespace {

double total_norm(const std::vector<Matrix>& mats) {
  double sq = 0;
  for (const auto& m : mats) sq += m.squaredNorm();
  return std::sqrt(sq);
}

std::vector<Matrix> params_of(const std::vector<OptState>& states) {
  std::vector<Matrix> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.param);
  return out;
}

}  // namespace

Trace run(const Problem& problem, const OptConfig& cfg, const RunOptions& opts) {
  if (opts.steps < 1) throw UsageError("run: steps must be >= 1");
  if (opts.eval_interval < 1) throw UsageError("run: eval_interval must be >= 1");
  if (opts.snapshot_interval < 0) throw UsageError("run: snapshot_interval must be >= 0");

  Trace trace;
  std::vector<OptState> states;
  for (auto& x1 : problem.initial_params()) {
    trace.slot_configs.push_back(resolve_for_param(cfg, x1));
    trace.slot_shapes.emplace_back(x1.rows(), x1.cols());
    trace.x1_norms.push_back(x1.norm());
    states.emplace_back(std::move(x1));
  }

  Rng rng(opts.seed);
  StepOptions step_opts;
  step_opts.ns_gap = opts.measure_ns_gap;
  trace.steps.reserve(static_cast<std::size_t>(opts.steps));

  for (long t = 1; t <= opts.steps; ++t) {
    std::vector<Matrix> params = params_of(states);
    if (opts.snapshot_interval > 0 && (t - 1) % opts.snapshot_interval == 0) {
      trace.snapshots.push_back({t, params});
    }
    StepRecord rec;
    rec.t = t;
    if ((t - 1) % opts.eval_interval == 0) {
      const auto full = problem.evaluate_full(params);
      rec.full_loss = full.loss;
      rec.full_grad_norm = total_norm(full.grads);
    }
    const auto batch = problem.sample_batch(rng);
    const auto eval = problem.evaluate(params, batch);
    rec.loss = eval.loss;
    rec.grad_norm = total_norm(eval.grads);

    for (std::size_t s = 0; s < states.size(); ++s) {
      const auto report = step(states[s], eval.grads[s], trace.slot_configs[s], step_opts);
      rec.slots.push_back({report.lr, report.beta, report.weight_decay, report.scale,
                           report.param_norm, report.update_norm, report.o_frobenius, report.ns_gap});
    }
    trace.steps.push_back(std::move(rec));
  }

  trace.final_params = params_of(states);
  if (opts.snapshot_interval > 0 && opts.steps % opts.snapshot_interval == 0) {
    trace.snapshots.push_back({opts.steps + 1, trace.final_params});
  }
  const auto final_eval = problem.evaluate_full(trace.final_params);
  trace.final_full_loss = final_eval.loss;
  trace.final_full_grad_norm = total_norm(final_eval.grads);
  return trace;
}

EnvelopeReport wd_envelope_check(const Trace& trace, const OptConfig& cfg, double rho, double eps_ns) {
  if (!std::holds_alternative<schedule::TheoryLr>(cfg.lr) ||
      !std::holds_alternative<schedule::TheoryBeta>(cfg.beta)) {
    throw UsageError("wd_envelope_check: trace must use the theory learning-rate and momentum schedules");
  }
  const auto* wd = std::get_if<schedule::TheoryWd>(&cfg.weight_decay);
  if (wd == nullptr) throw UsageError("wd_envelope_check: trace must use the theory weight-decay schedule");
  if (wd->rho != rho) throw UsageError("wd_envelope_check: rho differs from the schedule's rho");
  if (!(eps_ns >= 0.0 && eps_ns < 1.0)) throw UsageError("wd_envelope_check: eps_ns must lie in [0, 1)");
  if (trace.slot_configs.size() != trace.slot_shapes.size() || trace.x1_norms.size() != trace.slot_shapes.size()) {
    throw UsageError("wd_envelope_check: malformed trace");
  }

  constexpr double kSlack = 1e-9;
  EnvelopeReport out;
  out.ok = true;
  for (const auto& rec : trace.steps) {
    if (rec.slots.size() != trace.slot_shapes.size()) throw UsageError("wd_envelope_check: malformed trace");
    const double td = static_cast<double>(rec.t);
    for (std::size_t s = 0; s < rec.slots.size(); ++s) {
      const auto& slot = rec.slots[s];
      const auto [rows, cols] = trace.slot_shapes[s];
      const double a = slot.scale;
      const double n = static_cast<double>(std::min(rows, cols));
      const double lambda_x = slot.weight_decay * slot.param_norm;
      const double step_cap = (a * (1.0 + eps_ns) * std::sqrt(n) + rho) * slot.lr;
      const double lambda_cap = rho * std::pow(td, -0.25) / (trace.x1_norms[s] + 4.0 * a * (1.0 + eps_ns) * std::sqrt(n));

      out.max_lambda_x = std::max(out.max_lambda_x, lambda_x);
      if (step_cap > 0) out.max_step_ratio = std::max(out.max_step_ratio, slot.update_norm / step_cap);
      if (lambda_cap > 0) {
        out.max_lambda_ratio = std::max(out.max_lambda_ratio, slot.weight_decay / lambda_cap);
      } else if (slot.weight_decay > 0) {
        out.max_lambda_ratio = std::max(out.max_lambda_ratio, 2.0);
      }

      const bool violated = lambda_x > rho + kSlack || slot.update_norm > step_cap + kSlack ||
                            slot.weight_decay > lambda_cap + kSlack;
      if (violated && out.ok) {
        out.ok = false;
        out.first_violation = rec.t;
      }
    }
  }
  return out;
}

}  // namespace muoneq
