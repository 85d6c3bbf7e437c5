#include "muoneq/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "muoneq/experiments.hpp"
#include "muoneq/io.hpp"
#include "muoneq/theory.hpp"

namespace muoneq {

namespace {

namespace fs = std::filesystem;

struct AuditFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 42;
  std::string out;
  std::string format = "csv";
};

class Session {
 public:
  Session(const Globals& g, std::string subcommand, const std::vector<std::string>& args, std::ostream& out)
      : g_(g), subcommand_(std::move(subcommand)), args_(args), out_(out) {
    if (!g_.out.empty()) fs::create_directories(g_.out);
  }

  bool svg() const { return g_.format == "csv+svg" && !g_.out.empty(); }
  std::ostream& out() { return out_; }

  /// CSV goes to <out>/<name>.csv, or to stdout when no directory was given.
  void csv(const std::string& name, const CsvTable& table) {
    const std::string text = emit_csv(table);
    if (g_.out.empty()) {
      out_ << "# " << name << ".csv\n" << text;
      return;
    }
    write_file(fs::path(g_.out) / (name + ".csv"), text);
    outputs_.push_back(name + ".csv");
  }

  void chart(const std::string& name, const std::vector<Series>& series, const Axes& axes) {
    if (!svg()) return;
    write_file(fs::path(g_.out) / (name + ".svg"), emit_svg(series, axes));
    outputs_.push_back(name + ".svg");
  }

  void matrix(const std::string& name, const Matrix& A) {
    if (g_.out.empty()) return;
    meq1_write(fs::path(g_.out) / name, A);
    outputs_.push_back(name);
  }

  void finish() {
    if (g_.out.empty()) return;
    std::ostringstream m;
    m << "subcommand: " << subcommand_ << "\n";
    m << "args:";
    for (const auto& a : args_) m << ' ' << a;
    m << "\nseed: " << g_.seed << "\nversion: " << kArtifactVersion << "\noutputs:";
    for (const auto& o : outputs_) m << ' ' << o;
    m << "\n";
    write_file(fs::path(g_.out) / "manifest.txt", m.str());
  }

 private:
  Globals g_;
  std::string subcommand_;
  std::vector<std::string> args_;
  std::ostream& out_;
  std::vector<std::string> outputs_;
};

NsConfig ns_config(const std::string& coeffs, int steps, const std::string& prescale) {
  NsConfig cfg;
  cfg.polynomial = polynomial_preset(coeffs);
  cfg.steps = steps;
  if (prescale == "frobenius") cfg.prescale = Prescale::Frobenius;
  else if (prescale == "max1") cfg.prescale = Prescale::Max1Frobenius;
  else throw UsageError("unknown prescale '" + prescale + "' (expected frobenius|max1)");
  return cfg;
}

std::vector<EquilMode> parse_modes(const std::string& text) {
  std::vector<EquilMode> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_equil_mode(item));
  if (out.empty()) throw UsageError("no modes given");
  return out;
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

std::vector<Index> parse_dims(const std::string& text) {
  std::vector<Index> out;
  for (double v : parse_reals(text)) {
    if (v < 1 || v != std::floor(v)) throw UsageError("dims must be positive integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

std::vector<Matrix> read_inputs(const std::vector<std::string>& paths) {
  std::vector<Matrix> out;
  for (const auto& p : paths) out.push_back(read_matrix(p));
  return out;
}

// --- subcommands ----------------------------------------------------------------

struct SweepArgs {
  std::string shapes = "64x64,64x256,256x64,256x256";
  double spectrum = 2.0;
  double imbalance = 1.5;
  Index count = 50;
  int k_max = 10;
  std::string coeffs = "practical";
  std::string prescale = "frobenius";
  double eps = 0.0;
};

int cmd_ns_sweep(Session& s, const SweepArgs& a, std::uint64_t seed) {
  SweepOptions opts;
  opts.ensemble.shapes = parse_shapes(a.shapes);
  opts.ensemble.spectrum_decades = a.spectrum;
  opts.ensemble.imbalance_decades = a.imbalance;
  opts.ensemble.count = a.count;
  opts.ensemble.seed = seed;
  opts.k_max = a.k_max;
  opts.ns = ns_config(a.coeffs, a.k_max, a.prescale);
  opts.epsilon = a.eps;
  const auto result = run_ns_sweep(opts);

  s.csv("sweep", sweep_table(result.records));
  CsvTable summary;
  summary.header = {"shape", "mode", "k", "median_error", "median_kappa_raw", "median_kappa_post"};
  for (const auto& r : result.summary) {
    summary.rows.push_back({r.shape, r.mode, r.k, r.median_error, r.median_kappa_raw, r.median_kappa_post});
  }
  s.csv("sweep_summary", summary);

  for (const auto& shape : opts.ensemble.shapes) {
    const std::string name = shape_name(shape);
    std::vector<Series> err_series;
    for (EquilMode mode : kAllEquilModes) {
      Series ser{std::string(mode_label(mode)), {}, {}};
      for (const auto& r : result.summary) {
        if (r.shape == name && r.mode == mode_label(mode)) {
          ser.x.push_back(static_cast<double>(r.k));
          ser.y.push_back(r.median_error);
        }
      }
      err_series.push_back(std::move(ser));
    }
    s.chart("ns_error_" + name, err_series,
            {"NS relative error, " + name, "Newton-Schulz step k", "median ||X_k - Orth||_F / sqrt(r)", false, true});

    // Sorted condition numbers per mode: the spread of spectral compression.
    std::map<std::string, std::vector<double>> kappas;
    const auto ids = ensemble_shape_ids(opts.ensemble);
    for (const auto& rec : result.records) {
      if (rec.k != 0 || opts.ensemble.shapes[ids[static_cast<std::size_t>(rec.matrix_id)]] != shape) continue;
      kappas[rec.mode].push_back(rec.kappa_post);
      if (rec.mode == "none") kappas["raw"].push_back(rec.kappa_raw);
    }
    std::vector<Series> k_series;
    for (const std::string mode : {"rc", "r", "c", "none"}) {
      auto v = kappas[mode];
      std::sort(v.begin(), v.end());
      Series ser{mode, {}, v};
      for (std::size_t i = 0; i < v.size(); ++i) ser.x.push_back(static_cast<double>(i));
      k_series.push_back(std::move(ser));
    }
    s.chart("kappa_" + name, k_series, {"condition number after scaling, " + name, "matrix (sorted)", "kappa", false, true});
  }

  for (const auto& r : result.summary) {
    if (r.k == std::min<std::int64_t>(5, a.k_max)) {
      s.out() << r.shape << " " << r.mode << " k=" << r.k << " median_error=" << format_real(r.median_error)
              << " median_kappa=" << format_real(r.median_kappa_post) << "\n";
    }
  }
  return 0;
}

struct BoundArgs {
  std::string shapes = "64x64,64x256,256x64";
  double spectrum = 3.0;
  double imbalance = 1.0;
  Index count = 200;
  int k_max = 10;
  std::string coeffs = "taylor";
  double tolerance = 1e-10;
  std::vector<std::string> inputs;
};

int cmd_bound_check(Session& s, const BoundArgs& a, std::uint64_t seed) {
  std::vector<Matrix> mats;
  if (!a.inputs.empty()) {
    mats = read_inputs(a.inputs);
  } else {
    EnsembleOptions e;
    e.shapes = parse_shapes(a.shapes);
    e.spectrum_decades = a.spectrum;
    e.imbalance_decades = a.imbalance;
    e.seed = seed;
    mats = ensemble_split(e, a.count);
  }
  const auto poly = polynomial_preset(a.coeffs);
  validate_polynomial(poly);
  const auto audit = run_bound_audit(mats, poly, a.k_max, a.tolerance);

  CsvTable t;
  t.header = {"matrix_id", "k", "measured", "bound", "margin"};
  for (const auto& r : audit.rows) t.rows.push_back({r.matrix_id, r.k, r.measured, r.bound, r.measured - r.bound});
  s.csv("bound", t);
  s.out() << "matrices=" << mats.size() << " violations=" << audit.violations
          << " worst_margin=" << format_real(audit.worst_margin) << " tau_violations=" << audit.tau_violations
          << " worst_tau_gap=" << format_real(audit.worst_tau_gap) << "\n";
  if (audit.violations > 0 || audit.tau_violations > 0) throw AuditFailure("lower bound violated");
  return 0;
}

struct DecomposeArgs {
  std::vector<std::string> inputs;
  std::string shapes = "64x64,64x256,256x64";
  double spectrum = 2.0;
  double imbalance = 1.5;
  Index count = 30;
  std::string modes = "rc,r,c,none";
  std::string coeffs = "taylor";
  int steps = 5;
  std::string prescale = "max1";
  double eps = 0.0;
};

int cmd_decompose(Session& s, const DecomposeArgs& a, std::uint64_t seed) {
  std::vector<Matrix> mats;
  if (!a.inputs.empty()) {
    mats = read_inputs(a.inputs);
  } else {
    EnsembleOptions e;
    e.shapes = parse_shapes(a.shapes);
    e.spectrum_decades = a.spectrum;
    e.imbalance_decades = a.imbalance;
    e.seed = seed;
    mats = ensemble_split(e, a.count);
  }
  const auto modes = parse_modes(a.modes);
  const auto audit = run_decompose(mats, modes, ns_config(a.coeffs, a.steps, a.prescale), a.eps);

  CsvTable t;
  t.header = {"matrix_id", "mode", "approx_error", "precond_bias", "total", "triangle_ok"};
  for (const auto& r : audit.rows) {
    t.rows.push_back({r.matrix_id, r.mode, r.approx_error, r.precond_bias, r.total,
                      static_cast<std::int64_t>(r.triangle_ok)});
  }
  s.csv("decompose", t);

  CsvTable summary;
  summary.header = {"mode", "median_approx_error", "median_precond_bias", "median_total"};
  std::vector<Series> bars;
  for (EquilMode mode : modes) {
    std::vector<double> ae, pb, tot;
    for (const auto& r : audit.rows) {
      if (r.mode != mode_label(mode)) continue;
      ae.push_back(r.approx_error);
      pb.push_back(r.precond_bias);
      tot.push_back(r.total);
    }
    summary.rows.push_back({std::string(mode_label(mode)), median(ae), median(pb), median(tot)});
    s.out() << mode_label(mode) << " median approx=" << format_real(median(ae)) << " bias=" << format_real(median(pb))
            << " total=" << format_real(median(tot)) << "\n";
  }
  s.csv("decompose_summary", summary);
  for (const char* field : {"approx_error", "precond_bias", "total"}) {
    std::vector<Series> series;
    for (EquilMode mode : modes) {
      Series ser{std::string(mode_label(mode)), {}, {}};
      for (const auto& r : audit.rows) {
        if (r.mode != mode_label(mode)) continue;
        ser.x.push_back(static_cast<double>(r.matrix_id));
        const std::string f = field;
        ser.y.push_back(f == "approx_error" ? r.approx_error : f == "precond_bias" ? r.precond_bias : r.total);
      }
      series.push_back(std::move(ser));
    }
    s.chart(std::string("decompose_") + field, series, {std::string("error budget: ") + field, "matrix", field, false, true});
  }
  if (audit.violations > 0) throw AuditFailure(std::to_string(audit.violations) + " decomposition violations");
  return 0;
}

struct WhitenArgs {
  std::string side = "all";
  std::string grid = "0.1,0.031622776601683791,0.01,0.0031622776601683794,0.001";
};

int cmd_whiten_check(Session& s, const WhitenArgs& a, std::uint64_t seed) {
  std::vector<WhiteningSide> sides;
  if (a.side == "all") sides = {WhiteningSide::Row, WhiteningSide::Column, WhiteningSide::TwoSided};
  else sides = {parse_whitening_side(a.side)};
  const auto grid = parse_reals(a.grid);

  CsvTable points, slopes;
  points.header = {"side", "s", "gram_norm", "zeroth_residual", "first_order_residual"};
  slopes.header = {"side", "zeroth_slope", "first_order_slope", "ok"};
  std::vector<Series> series;
  bool all_ok = true;
  for (WhiteningSide side : sides) {
    const auto study = whitening_order_study(side, grid, seed);
    const std::string name(to_string(side));
    Series z{name + " zeroth", {}, {}}, f{name + " first-order", {}, {}};
    for (const auto& p : study.points) {
      points.rows.push_back({name, p.s, p.gram_norm, p.zeroth_residual, p.first_order_residual});
      z.x.push_back(p.gram_norm);
      z.y.push_back(p.zeroth_residual);
      f.x.push_back(p.gram_norm);
      f.y.push_back(p.first_order_residual);
    }
    series.push_back(std::move(z));
    series.push_back(std::move(f));
    const bool ok = study.zeroth_slope >= 0.9 && study.zeroth_slope <= 1.1 && study.first_order_slope >= 1.8 &&
                    study.first_order_slope <= 2.2;
    all_ok = all_ok && ok;
    slopes.rows.push_back({name, study.zeroth_slope, study.first_order_slope, static_cast<std::int64_t>(ok)});
    s.out() << name << " zeroth_slope=" << format_real(study.zeroth_slope)
            << " first_order_slope=" << format_real(study.first_order_slope) << (ok ? " ok" : " FAIL") << "\n";
  }
  s.csv("whiten", points);
  s.csv("whiten_slopes", slopes);
  s.chart("whiten", series, {"whitening residuals", "||C||_2", "residual (spectral norm)", true, true});
  if (!all_ok) throw AuditFailure("whitening slopes out of range");
  return 0;
}

struct AlignArgs {
  Index count = 1000;
  Index max_rows = 128;
  Index max_cols = 256;
  std::string shapes;
  std::vector<std::string> inputs;
};

int cmd_align_check(Session& s, const AlignArgs& a, std::uint64_t seed) {
  std::vector<Matrix> mats;
  if (!a.inputs.empty()) {
    mats = read_inputs(a.inputs);
  } else if (!a.shapes.empty()) {
    const auto shapes = parse_shapes(a.shapes);
    for (Index i = 0; i < a.count; ++i) {
      const auto& shape = shapes[static_cast<std::size_t>(i) % shapes.size()];
      auto one = alignment_matrices(1, shape.first, shape.second, derive_seed(seed, static_cast<std::uint64_t>(i)));
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      Matrix M = rng.gaussian(shape.first, shape.second);
      // Keep the fixed shape but borrow the zero-row pattern of the random member.
      for (Index r = 0; r < M.rows() && r < one[0].rows(); ++r) {
        if (one[0].row(r).squaredNorm() == 0.0) M.row(r).setZero();
      }
      mats.push_back(std::move(M));
    }
  } else {
    mats = alignment_matrices(a.count, a.max_rows, a.max_cols, seed);
  }
  const auto audit = run_align_audit(mats);
  CsvTable t;
  t.header = {"matrix_id", "rows", "cols", "zero_rows", "lhs", "rhs", "lhs_ns", "rhs_ns", "eps_ns"};
  double worst = std::numeric_limits<double>::infinity(), worst_ns = worst;
  for (const auto& r : audit.rows) {
    t.rows.push_back({r.matrix_id, static_cast<std::int64_t>(r.rows), static_cast<std::int64_t>(r.cols),
                      static_cast<std::int64_t>(r.zero_rows), r.lhs, r.rhs, r.lhs_ns, r.rhs_ns, r.eps_ns});
    worst = std::min(worst, r.lhs - r.rhs);
    worst_ns = std::min(worst_ns, r.lhs_ns - r.rhs_ns);
  }
  s.csv("align", t);
  s.out() << "matrices=" << mats.size() << " violations=" << audit.violations << " worst_margin=" << format_real(worst)
          << " worst_margin_ns=" << format_real(worst_ns) << "\n";
  if (audit.violations > 0) throw AuditFailure("alignment inequality violated");
  return 0;
}

struct InexactArgs {
  std::vector<std::string> inputs;
  std::string shapes = "64x64,64x256,256x64";
  double spectrum = 1.0;
  double imbalance = 0.5;
  Index count = 30;
  std::string coeffs = "taylor";
  int steps = 5;
  std::string prescale = "max1";
};

int cmd_inexactness(Session& s, const InexactArgs& a, std::uint64_t seed) {
  std::vector<Matrix> mats;
  std::vector<std::string> names;
  if (!a.inputs.empty()) {
    mats = read_inputs(a.inputs);
    names = a.inputs;
  } else {
    EnsembleOptions e;
    e.shapes = parse_shapes(a.shapes);
    e.spectrum_decades = a.spectrum;
    e.imbalance_decades = a.imbalance;
    e.seed = seed;
    mats = ensemble_split(e, a.count);
    for (std::size_t i = 0; i < mats.size(); ++i) names.push_back("ensemble:" + std::to_string(i));
  }
  const NsConfig ns = ns_config(a.coeffs, a.steps, a.prescale);
  const bool proved = a.coeffs == "taylor" && a.steps == 5 && a.prescale == "max1";

  CsvTable t;
  t.header = {"input", "delta_0", "eps_ns", "lemma_bound"};
  std::int64_t violations = 0;
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const auto one = ns_inexactness(std::span<const Matrix>(&mats[i], 1), ns);
    t.rows.push_back({names[i], one.delta_0, one.eps_ns, one.lemma_bound});
    if (proved && (one.eps_ns > one.lemma_bound + 1e-6 || one.eps_ns >= 1.0)) ++violations;
  }
  const auto all = ns_inexactness(mats, ns);
  t.rows.push_back({std::string("all"), all.delta_0, all.eps_ns, all.lemma_bound});
  s.csv("inexactness", t);
  s.out() << "eps_ns=" << format_real(all.eps_ns) << " delta_0=" << format_real(all.delta_0)
          << " lemma_bound=" << format_real(all.lemma_bound) << " violations=" << violations << "\n";
  if (violations > 0) throw AuditFailure("NS5 inexactness exceeds the lemma bound");
  return 0;
}

struct ConstantsArgs {
  std::string kind;
  double m = 64, n = 64, g_inf = 1, eps = -1, sigma = 1, l_smooth = 1, a = -1, f_gap = 1;
  double rho = 0, eps_ns = 0;
  std::string horizons = "1000";
};

int cmd_constants(Session& s, const ConstantsArgs& c) {
  const double a = c.a > 0 ? c.a : 0.2 * std::sqrt(std::max(c.m, c.n));
  CsvTable t;
  t.header = {"name", "value"};
  auto add = [&](const std::string& name, double v) { t.rows.push_back({name, v}); };
  const auto horizons = parse_reals(c.horizons);
  if (c.kind == "rc") {
    RcInputs in{c.m, c.n, c.g_inf, c.eps > 0 ? c.eps : 0.8 * c.g_inf * c.g_inf * std::max(c.m, c.n),
                c.sigma, c.l_smooth, a, c.f_gap};
    const auto k = rc_constants(in);
    add("m", in.m); add("n", in.n); add("g_inf", in.g_inf); add("eps", in.eps); add("sigma", in.sigma);
    add("L", in.l_smooth); add("a", in.a); add("f_gap", in.f_gap);
    add("rho_r", k.rho_r); add("rho_c", k.rho_c); add("chi_eps", k.chi); add("C1", k.c1); add("C2", k.c2);
    add("below_threshold", k.below_threshold ? 1.0 : 0.0);
    for (double T : horizons) add("rate_T=" + format_real(T), k.rate(T));
    if (k.below_threshold) s.out() << "warning: eps below (4/5) g_inf^2 max(m,n); chi_eps is not guaranteed positive\n";
  } else {
    RInputs in{c.m, c.n, c.rho, c.sigma, c.l_smooth, a, c.eps_ns, c.f_gap};
    const auto k = r_constants(in);
    add("m", in.m); add("n", in.n); add("rho", in.rho); add("sigma", in.sigma); add("L", in.l_smooth);
    add("a", in.a); add("eps_ns", in.eps_ns); add("f_gap", in.f_gap);
    add("C1", k.c1); add("C2", k.c2); add("denom", k.denom);
    for (double T : horizons) add("rate_T=" + format_real(T), k.rate(T));
  }
  s.csv("constants_" + c.kind, t);
  return 0;
}

struct TrainArgs {
  std::string problem = "least-squares";
  std::string dims = "64,32";
  Index samples = 512;
  Index batch = 32;
  double noise = 0.01;
  std::string mode = "r";
  bool compare = false;
  bool nesterov = false;
  long steps = 2000;
  std::string schedules = "theory";
  std::string orth = "ns5";
  double eps = 1e-8;
  double scale = -1;
  double rho = 0;
  double wd_eps_ns = 1.0;
  double lr = 0.02;
  double momentum = 0.95;
  double weight_decay = 0.0;
  long warmup = 0;
  long eval_interval = 10;
};

int cmd_train(Session& s, const TrainArgs& a, std::uint64_t seed) {
  ProblemSpec ps;
  ps.kind = parse_problem_kind(a.problem);
  ps.dims = parse_dims(a.dims);
  ps.n_samples = a.samples;
  ps.batch_size = a.batch;
  ps.noise = a.noise;
  ps.seed = seed;
  const auto problem = make_problem(ps);

  OptConfig base;
  base.equil.epsilon = a.eps;
  base.nesterov = a.nesterov;
  if (a.orth == "ns5") base.orth = Orthogonalizer::NewtonSchulz;
  else if (a.orth == "exact") base.orth = Orthogonalizer::ExactPolar;
  else throw UsageError("unknown --orth '" + a.orth + "' (expected ns5|exact)");
  if (a.scale > 0) base.scale = a.scale;
  const bool theory = a.schedules == "theory";
  if (theory) {
    base.lr = schedule::TheoryLr{};
    base.beta = schedule::TheoryBeta{};
    base.weight_decay = schedule::TheoryWd{a.rho, a.wd_eps_ns};
  } else if (a.schedules == "practical") {
    base.lr = schedule::WarmupCosine{a.lr, a.warmup, a.steps + 1};
    base.beta = schedule::Constant{a.momentum};
    base.weight_decay = schedule::Constant{a.weight_decay};
  } else {
    throw UsageError("unknown --schedules '" + a.schedules + "' (expected theory|practical)");
  }

  std::vector<EquilMode> modes;
  if (a.compare) modes = {EquilMode::None, EquilMode::RC, EquilMode::R, EquilMode::C};
  else modes = {parse_equil_mode(a.mode)};

  RunOptions ro;
  ro.steps = a.steps;
  ro.seed = seed;
  ro.eval_interval = a.eval_interval;
  ro.measure_ns_gap = theory && base.orth == Orthogonalizer::NewtonSchulz;

  CsvTable trace_t, final_t, env_t;
  trace_t.header = {"mode", "t", "slot", "loss", "grad_norm", "full_loss", "full_grad_norm", "lr", "beta",
                    "weight_decay", "param_norm", "update_norm", "o_frobenius"};
  final_t.header = {"mode", "initial_full_loss", "initial_full_grad_norm", "final_full_loss", "final_full_grad_norm"};
  env_t.header = {"mode", "rho", "eps_ns", "ok", "max_lambda_x", "max_step_ratio", "max_lambda_ratio",
                  "first_violation"};
  std::vector<Series> loss_series, grad_series;
  bool envelope_ok = true;

  for (EquilMode mode : modes) {
    OptConfig cfg = base;
    cfg.equil.mode = mode;
    const auto trace = run(*problem, cfg, ro);
    const std::string name(mode_label(mode));
    Series ls{name, {}, {}}, gs{name, {}, {}};
    for (const auto& rec : trace.steps) {
      for (std::size_t k = 0; k < rec.slots.size(); ++k) {
        const auto& sl = rec.slots[k];
        const CsvCell fl = rec.full_loss ? CsvCell(*rec.full_loss) : CsvCell(std::string());
        const CsvCell fg = rec.full_grad_norm ? CsvCell(*rec.full_grad_norm) : CsvCell(std::string());
        trace_t.rows.push_back({name, rec.t, static_cast<std::int64_t>(k), rec.loss, rec.grad_norm, fl, fg, sl.lr,
                                sl.beta, sl.weight_decay, sl.param_norm, sl.update_norm, sl.o_frobenius});
      }
      if (rec.full_loss) {
        ls.x.push_back(static_cast<double>(rec.t));
        ls.y.push_back(*rec.full_loss);
        gs.x.push_back(static_cast<double>(rec.t));
        gs.y.push_back(*rec.full_grad_norm);
      }
    }
    ls.x.push_back(static_cast<double>(a.steps + 1));
    ls.y.push_back(trace.final_full_loss);
    gs.x.push_back(static_cast<double>(a.steps + 1));
    gs.y.push_back(trace.final_full_grad_norm);
    loss_series.push_back(std::move(ls));
    grad_series.push_back(std::move(gs));

    final_t.rows.push_back({name, *trace.steps.front().full_loss, *trace.steps.front().full_grad_norm,
                            trace.final_full_loss, trace.final_full_grad_norm});
    for (std::size_t k = 0; k < trace.final_params.size(); ++k) {
      s.matrix("final_" + name + "_" + std::to_string(k) + ".meq1", trace.final_params[k]);
    }
    s.out() << name << " final_loss=" << format_real(trace.final_full_loss)
            << " final_grad_norm=" << format_real(trace.final_full_grad_norm);

    if (theory) {
      const double eps_ns = ro.measure_ns_gap ? measured_eps_ns(trace) : 0.0;
      const auto env = wd_envelope_check(trace, cfg, a.rho, std::min(eps_ns, a.wd_eps_ns));
      envelope_ok = envelope_ok && env.ok;
      env_t.rows.push_back({name, a.rho, eps_ns, static_cast<std::int64_t>(env.ok), env.max_lambda_x,
                            env.max_step_ratio, env.max_lambda_ratio, static_cast<std::int64_t>(env.first_violation)});
      s.out() << " eps_ns=" << format_real(eps_ns) << " envelope=" << (env.ok ? "ok" : "VIOLATED");
    }
    s.out() << "\n";
  }
  s.csv("trace", trace_t);
  s.csv("final", final_t);
  if (theory) s.csv("envelope", env_t);
  s.chart("loss", loss_series, {"full-data loss", "step t", "f(X_t)", true, true});
  s.chart("grad_norm", grad_series, {"full-gradient norm", "step t", "||grad f(X_t)||_F", true, true});
  if (!envelope_ok) throw AuditFailure("weight-decay envelope violated");
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MuonEq experiments and audits", "muoneq"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  Globals g;
  app.add_option("--seed", g.seed, "64-bit seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory (CSV to stdout when omitted)");
  app.add_option("--format", g.format, "csv|csv+svg")->check(CLI::IsMember({"csv", "csv+svg"}))->capture_default_str();

  std::string chosen;
  std::function<int(Session&)> action;
  auto bind = [&](CLI::App* sub, std::function<int(Session&)> fn) {
    sub->callback([&chosen, &action, sub, fn = std::move(fn)] {
      chosen = sub->get_name();
      action = fn;
    });
  };

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("ns-sweep", "per-mode NS error curves and condition numbers over an ensemble");
  c_sweep->add_option("--shapes", sweep.shapes)->capture_default_str();
  c_sweep->add_option("--spectrum-decades", sweep.spectrum)->capture_default_str();
  c_sweep->add_option("--imbalance-decades", sweep.imbalance)->capture_default_str();
  c_sweep->add_option("--count", sweep.count, "matrices per shape")->capture_default_str();
  c_sweep->add_option("--k-max", sweep.k_max)->capture_default_str();
  c_sweep->add_option("--coeffs", sweep.coeffs)->check(CLI::IsMember({"taylor", "practical"}))->capture_default_str();
  c_sweep->add_option("--prescale", sweep.prescale)->check(CLI::IsMember({"frobenius", "max1"}))->capture_default_str();
  c_sweep->add_option("--eps", sweep.eps, "equilibration epsilon")->capture_default_str();
  bind(c_sweep, [&](Session& s) { return cmd_ns_sweep(s, sweep, g.seed); });

  BoundArgs bound;
  auto* c_bound = app.add_subcommand("bound-check", "audit the finite-step NS lower bound");
  c_bound->add_option("--shapes", bound.shapes)->capture_default_str();
  c_bound->add_option("--spectrum-decades", bound.spectrum)->capture_default_str();
  c_bound->add_option("--imbalance-decades", bound.imbalance)->capture_default_str();
  c_bound->add_option("--count", bound.count, "total matrices")->capture_default_str();
  c_bound->add_option("--k-max", bound.k_max)->capture_default_str();
  c_bound->add_option("--coeffs", bound.coeffs)->check(CLI::IsMember({"taylor", "practical"}))->capture_default_str();
  c_bound->add_option("--tolerance", bound.tolerance)->capture_default_str();
  c_bound->add_option("--input", bound.inputs, "MEQ1/NPY matrices instead of an ensemble");
  bind(c_bound, [&](Session& s) { return cmd_bound_check(s, bound, g.seed); });

  DecomposeArgs dec;
  auto* c_dec = app.add_subcommand("decompose", "approximation error vs preconditioning bias");
  c_dec->add_option("--input", dec.inputs, "MEQ1/NPY matrices instead of an ensemble");
  c_dec->add_option("--shapes", dec.shapes)->capture_default_str();
  c_dec->add_option("--spectrum-decades", dec.spectrum)->capture_default_str();
  c_dec->add_option("--imbalance-decades", dec.imbalance)->capture_default_str();
  c_dec->add_option("--count", dec.count, "total matrices")->capture_default_str();
  c_dec->add_option("--modes", dec.modes)->capture_default_str();
  c_dec->add_option("--coeffs", dec.coeffs)->check(CLI::IsMember({"taylor", "practical"}))->capture_default_str();
  c_dec->add_option("--steps", dec.steps)->capture_default_str();
  c_dec->add_option("--prescale", dec.prescale)->check(CLI::IsMember({"frobenius", "max1"}))->capture_default_str();
  c_dec->add_option("--eps", dec.eps)->capture_default_str();
  bind(c_dec, [&](Session& s) { return cmd_decompose(s, dec, g.seed); });

  WhitenArgs wh;
  auto* c_wh = app.add_subcommand("whiten-check", "first/second-order whitening residual scaling");
  c_wh->add_option("--side", wh.side)->check(CLI::IsMember({"all", "row", "column", "two-sided"}))->capture_default_str();
  c_wh->add_option("--t-grid", wh.grid, "target ||C||_2 values")->capture_default_str();
  bind(c_wh, [&](Session& s) { return cmd_whiten_check(s, wh, g.seed); });

  AlignArgs al;
  auto* c_al = app.add_subcommand("align-check", "alignment inequality audit (exact and NS5)");
  c_al->add_option("--count", al.count)->capture_default_str();
  c_al->add_option("--max-rows", al.max_rows)->capture_default_str();
  c_al->add_option("--max-cols", al.max_cols)->capture_default_str();
  c_al->add_option("--shapes", al.shapes, "fixed shapes, cycled");
  c_al->add_option("--input", al.inputs, "MEQ1/NPY matrices");
  bind(c_al, [&](Session& s) { return cmd_align_check(s, al, g.seed); });

  InexactArgs in;
  auto* c_in = app.add_subcommand("inexactness", "NS5 polar gap, delta_0 and the lemma bound");
  c_in->add_option("--input", in.inputs, "MEQ1/NPY matrices");
  c_in->add_option("--shapes", in.shapes)->capture_default_str();
  c_in->add_option("--spectrum-decades", in.spectrum)->capture_default_str();
  c_in->add_option("--imbalance-decades", in.imbalance)->capture_default_str();
  c_in->add_option("--count", in.count)->capture_default_str();
  c_in->add_option("--coeffs", in.coeffs)->check(CLI::IsMember({"taylor", "practical"}))->capture_default_str();
  c_in->add_option("--steps", in.steps)->capture_default_str();
  c_in->add_option("--prescale", in.prescale)->check(CLI::IsMember({"frobenius", "max1"}))->capture_default_str();
  bind(c_in, [&](Session& s) { return cmd_inexactness(s, in, g.seed); });

  ConstantsArgs ca;
  auto* c_ca = app.add_subcommand("constants", "convergence constants as CSV");
  c_ca->add_option("kind", ca.kind, "rc|r")->required()->check(CLI::IsMember({"rc", "r"}));
  c_ca->add_option("--m", ca.m)->capture_default_str();
  c_ca->add_option("--n", ca.n)->capture_default_str();
  c_ca->add_option("--g-inf", ca.g_inf)->capture_default_str();
  c_ca->add_option("--eps", ca.eps, "default (4/5) g_inf^2 max(m,n)");
  c_ca->add_option("--sigma", ca.sigma)->capture_default_str();
  c_ca->add_option("--L", ca.l_smooth)->capture_default_str();
  c_ca->add_option("--a", ca.a, "default 0.2 sqrt(max(m,n))");
  c_ca->add_option("--f-gap", ca.f_gap)->capture_default_str();
  c_ca->add_option("--rho", ca.rho)->capture_default_str();
  c_ca->add_option("--eps-ns", ca.eps_ns)->capture_default_str();
  c_ca->add_option("--T", ca.horizons, "comma-separated horizons")->capture_default_str();
  bind(c_ca, [&](Session& s) { return cmd_constants(s, ca); });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "run the optimizer on a synthetic problem");
  c_tr->add_option("--problem", tr.problem)->check(CLI::IsMember({"least-squares", "mlp2"}))->capture_default_str();
  c_tr->add_option("--dims", tr.dims, "least squares: rows,cols; mlp2: in,hidden,classes")->capture_default_str();
  c_tr->add_option("--samples", tr.samples)->capture_default_str();
  c_tr->add_option("--batch", tr.batch)->capture_default_str();
  c_tr->add_option("--noise", tr.noise)->capture_default_str();
  c_tr->add_option("--mode", tr.mode)->capture_default_str();
  c_tr->add_flag("--compare", tr.compare, "run none, rc, r and c under one seed");
  c_tr->add_flag("--nesterov", tr.nesterov);
  c_tr->add_option("--steps", tr.steps)->capture_default_str();
  c_tr->add_option("--schedules", tr.schedules)->check(CLI::IsMember({"theory", "practical"}))->capture_default_str();
  c_tr->add_option("--orth", tr.orth)->check(CLI::IsMember({"ns5", "exact"}))->capture_default_str();
  c_tr->add_option("--eps", tr.eps, "equilibration epsilon")->capture_default_str();
  c_tr->add_option("--scale", tr.scale, "update scale a (default 0.2 sqrt(max(m,n)))");
  c_tr->add_option("--rho", tr.rho, "theory weight-decay rho")->capture_default_str();
  c_tr->add_option("--wd-eps-ns", tr.wd_eps_ns, "eps_ns assumed by the theory weight-decay schedule")->capture_default_str();
  c_tr->add_option("--lr", tr.lr, "practical peak learning rate")->capture_default_str();
  c_tr->add_option("--momentum", tr.momentum, "practical beta")->capture_default_str();
  c_tr->add_option("--weight-decay", tr.weight_decay, "practical lambda")->capture_default_str();
  c_tr->add_option("--warmup", tr.warmup, "practical warmup steps")->capture_default_str();
  c_tr->add_option("--eval-interval", tr.eval_interval)->capture_default_str();
  bind(c_tr, [&](Session& s) { return cmd_train(s, tr, g.seed); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    Session session(g, chosen, args, out);
    const int code = action(session);
    session.finish();
    return code;
  } catch (const AuditFailure& e) {
    err << "audit failed: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace muoneq
