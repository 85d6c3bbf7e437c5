#include "muoneq/experiments.hpp"

#include <cmath>
#include <map>

#include "muoneq/theory.hpp"

namespace muoneq {

std::vector<Shape> parse_shapes(const std::string& text) {
  std::vector<Shape> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto x = item.find_first_of("xX");
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used_r = 0, used_c = 0;
      const long rows = std::stol(item.substr(0, x), &used_r);
      const long cols = std::stol(item.substr(x + 1), &used_c);
      if (used_r != x || used_c != item.size() - x - 1 || rows < 1 || cols < 1) throw std::invalid_argument(item);
      out.emplace_back(rows, cols);
    } catch (const std::logic_error&) {
      throw UsageError("bad shape '" + item + "' (expected ROWSxCOLS)");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string shape_name(const Shape& shape) {
  return std::to_string(shape.first) + "x" + std::to_string(shape.second);
}

namespace {

EnsembleSpec spec_for(const EnsembleOptions& opts, std::size_t s) {
  EnsembleSpec spec;
  spec.rows = opts.shapes[s].first;
  spec.cols = opts.shapes[s].second;
  spec.spectrum_decades = opts.spectrum_decades;
  spec.row_scale_decades = opts.imbalance_decades;
  spec.col_scale_decades = opts.imbalance_decades;
  spec.count = opts.count;
  spec.seed = derive_seed(opts.seed, s);
  return spec;
}

}  // namespace

std::vector<Matrix> ensemble_matrices(const EnsembleOptions& opts) {
  if (opts.count < 1) throw UsageError("ensemble count must be >= 1");
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < opts.shapes.size(); ++s) {
    for (auto& m : ensemble(spec_for(opts, s))) out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::size_t> ensemble_shape_ids(const EnsembleOptions& opts) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < opts.shapes.size(); ++s) out.insert(out.end(), static_cast<std::size_t>(opts.count), s);
  return out;
}

std::vector<Matrix> ensemble_split(const EnsembleOptions& opts, Index total) {
  if (total < 1) throw UsageError("ensemble count must be >= 1");
  if (opts.shapes.empty()) throw UsageError("ensemble needs at least one shape");
  const auto S = static_cast<Index>(opts.shapes.size());
  std::vector<Matrix> out;
  for (Index s = 0; s < S; ++s) {
    EnsembleSpec spec = spec_for(opts, static_cast<std::size_t>(s));
    spec.count = total / S + (s < total % S ? 1 : 0);
    if (spec.count == 0) continue;
    for (auto& m : ensemble(spec)) out.push_back(std::move(m));
  }
  return out;
}

SweepResult run_ns_sweep(const SweepOptions& opts) {
  if (opts.k_max < 0) throw UsageError("k_max must be >= 0");
  const auto mats = ensemble_matrices(opts.ensemble);
  const auto shape_ids = ensemble_shape_ids(opts.ensemble);
  NsConfig ns = opts.ns;
  ns.steps = opts.k_max;

  SweepResult result;
  // (shape, mode, k) -> errors; (shape, mode) -> kappas
  std::map<std::tuple<std::size_t, int, int>, std::vector<double>> errors;
  std::map<std::pair<std::size_t, int>, std::vector<double>> kappa_raw, kappa_post;
  for (std::size_t id = 0; id < mats.size(); ++id) {
    const Matrix& M = mats[id];
    const double k_raw = spectral_report(M).condition_number;
    for (int mi = 0; mi < static_cast<int>(kAllEquilModes.size()); ++mi) {
      const EquilMode mode = kAllEquilModes[static_cast<std::size_t>(mi)];
      const Matrix S = diag_pre(M, EquilConfig{mode, opts.epsilon}).result;
      const auto f = svd(S);
      const Index r = f.rank();
      if (r == 0) throw DomainError("ns sweep: equilibrated matrix is zero");
      const Matrix orth = f.U * f.V.transpose();
      double total = 0;
      for (Index i = 0; i < r; ++i) total += f.sigma(i) * f.sigma(i);
      double entropy = 0;
      for (Index i = 0; i < r; ++i) {
        const double p = f.sigma(i) * f.sigma(i) / total;
        if (p > 0) entropy -= p * std::log(p);
      }
      const double k_post = f.sigma(0) / f.sigma(r - 1);
      const double sr = total / (f.sigma(0) * f.sigma(0));
      const auto run = ns_run(S, ns, true, &orth);
      const double root_r = std::sqrt(static_cast<double>(r));
      const std::string name(mode_label(mode));
      for (int k = 0; k <= opts.k_max; ++k) {
        const double err = run.trajectory->per_step_error[static_cast<std::size_t>(k)] / root_r;
        result.records.push_back({static_cast<std::int64_t>(id), name, k, err, k_raw, k_post, sr, entropy});
        errors[{shape_ids[id], mi, k}].push_back(err);
      }
      kappa_raw[{shape_ids[id], mi}].push_back(k_raw);
      kappa_post[{shape_ids[id], mi}].push_back(k_post);
    }
  }
  for (const auto& [key, errs] : errors) {
    const auto [s, mi, k] = key;
    result.summary.push_back({shape_name(opts.ensemble.shapes[s]),
                              std::string(mode_label(kAllEquilModes[static_cast<std::size_t>(mi)])), k,
                              median(errs), median(kappa_raw[{s, mi}]), median(kappa_post[{s, mi}])});
  }
  return result;
}

BoundAudit run_bound_audit(const std::vector<Matrix>& mats, const NsPolynomial& poly, int k_max, double tolerance) {
  const NsConfig ns{poly, k_max, Prescale::Frobenius};
  BoundAudit audit;
  audit.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < mats.size(); ++id) {
    const Matrix& G = mats[id];
    const auto f = svd(G);
    const Matrix orth = f.U * f.V.transpose();
    const auto bound = thm1_bound(G, poly.a, k_max);
    const auto run = ns_run(G, ns, true, &orth);
    const double root_r = std::sqrt(static_cast<double>(f.rank()));
    for (int k = 0; k <= k_max; ++k) {
      const double measured = run.trajectory->per_step_error[static_cast<std::size_t>(k)] / root_r;
      const double b = bound.bound_per_k[static_cast<std::size_t>(k)];
      audit.rows.push_back({static_cast<std::int64_t>(id), k, measured, b});
      audit.worst_margin = std::min(audit.worst_margin, measured - b);
      if (measured < b - tolerance) ++audit.violations;
    }
    const double kappa = f.sigma(0) / f.sigma(f.rank() - 1);
    const double gap = std::abs(bound.tau_spread - std::log(kappa) / std::log(poly.a));
    audit.worst_tau_gap = std::max(audit.worst_tau_gap, gap);
    if (gap > tolerance) ++audit.tau_violations;
  }
  return audit;
}

std::vector<Matrix> alignment_matrices(Index count, Index max_rows, Index max_cols, std::uint64_t seed) {
  if (count < 0 || max_rows < 1 || max_cols < 1) throw UsageError("alignment_matrices: bad sizes");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const auto rows = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(max_rows)));
    const auto cols = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(max_cols)));
    Matrix M = rng.gaussian(rows, cols);
    for (Index r = 0; r < rows; ++r) M.row(r) *= std::pow(10.0, 3.0 * rng.uniform() - 1.5);
    if (rows > 1 && rng.below(3) == 0) {
      const auto zeros = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(rows - 1)));
      for (Index z = 0; z < zeros; ++z) M.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(rows)))).setZero();
    }
    out.push_back(std::move(M));
  }
  return out;
}

AlignAudit run_align_audit(const std::vector<Matrix>& mats, double tolerance) {
  AlignAudit audit;
  for (std::size_t id = 0; id < mats.size(); ++id) {
    const Matrix& M = mats[id];
    const auto m = alignment_margin(M);
    const Index zero_rows = (M.rowwise().squaredNorm().array() == 0.0).count();
    audit.rows.push_back({static_cast<std::int64_t>(id), M.rows(), M.cols(), zero_rows, m.lhs, m.rhs, m.lhs_ns,
                          m.rhs_ns, m.eps_ns});
    if (m.lhs < m.rhs - tolerance || m.lhs_ns < m.rhs_ns - tolerance) ++audit.violations;
  }
  return audit;
}

DecomposeAudit run_decompose(const std::vector<Matrix>& mats, const std::vector<EquilMode>& modes,
                             const NsConfig& ns, double epsilon) {
  DecomposeAudit audit;
  for (std::size_t id = 0; id < mats.size(); ++id) {
    for (EquilMode mode : modes) {
      const auto d = error_decomposition(mats[id], EquilConfig{mode, epsilon}, ns);
      audit.rows.push_back({static_cast<std::int64_t>(id), std::string(mode_label(mode)), d.approx_error,
                            d.precond_bias, d.total, d.triangle_ok});
      if (!d.triangle_ok || (mode == EquilMode::None && d.precond_bias != 0.0)) ++audit.violations;
    }
  }
  return audit;
}

std::vector<double> smoothed_loss(const Trace& trace, std::size_t window) {
  if (window == 0) throw UsageError("smoothed_loss: window must be >= 1");
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= trace.steps.size(); start += window) {
    double sum = 0;
    for (std::size_t t = start; t < start + window; ++t) sum += trace.steps[t].loss;
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

bool non_increasing(const std::vector<double>& values) {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[i - 1]) return false;
  }
  return true;
}

double measured_eps_ns(const Trace& trace) {
  double eps = 0;
  for (const auto& rec : trace.steps) {
    for (const auto& slot : rec.slots) {
      if (!slot.ns_gap) throw UsageError("measured_eps_ns: trace was run without NS gap measurement");
      eps = std::max(eps, *slot.ns_gap);
    }
  }
  return eps;
}

}  // namespace muoneq
