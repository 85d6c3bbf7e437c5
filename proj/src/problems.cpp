#include "muoneq/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace muoneq {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::StochasticLeastSquares: return "least-squares";
    case ProblemKind::Mlp2Classification: return "mlp2";
  }
  return "?";
}

ProblemKind parse_problem_kind(std::string_view text) {
  if (text == "least-squares" || text == "least_squares" || text == "lsq") {
    return ProblemKind::StochasticLeastSquares;
  }
  if (text == "mlp2") return ProblemKind::Mlp2Classification;
  throw UsageError("unknown problem '" + std::string(text) + "' (expected least-squares|mlp2)");
}

// ---------------------------------------------------------------------------

Evaluation Problem::evaluate_full(std::span<const Matrix> params) const {
  std::vector<Index> all(static_cast<std::size_t>(n_samples()));
  std::iota(all.begin(), all.end(), Index{0});
  return evaluate(params, all);
}

std::vector<Index> Problem::sample_batch(Rng& rng) const {
  std::vector<Index> batch(static_cast<std::size_t>(batch_size_));
  const auto n = static_cast<std::uint64_t>(n_samples());
  for (auto& idx : batch) idx = static_cast<Index>(rng.below(n));
  return batch;
}

void Problem::check_shapes(std::span<const Matrix> params) const {
  const auto shapes = param_shapes();
  if (params.size() != shapes.size()) {
    throw UsageError("problem expects " + std::to_string(shapes.size()) + " parameter matrices, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].rows() != shapes[i].first || params[i].cols() != shapes[i].second) {
      throw UsageError("parameter " + std::to_string(i) + " has shape " +
                       std::to_string(params[i].rows()) + "x" + std::to_string(params[i].cols()) +
                       ", expected " + std::to_string(shapes[i].first) + "x" +
                       std::to_string(shapes[i].second));
    }
  }
}

namespace {

void require_dims(const ProblemSpec& spec, std::size_t count, const char* what) {
  if (spec.dims.size() != count) {
    throw UsageError(std::string(what) + " needs " + std::to_string(count) + " dims");
  }
  for (Index d : spec.dims) {
    if (d < 1) throw UsageError(std::string(what) + ": dims must be positive");
  }
  if (spec.batch_size < 1 || spec.n_samples < spec.batch_size) {
    throw UsageError(std::string(what) + ": need 1 <= batch_size <= n_samples");
  }
  if (!(spec.noise >= 0.0)) throw UsageError(std::string(what) + ": noise must be >= 0");
}

Matrix gather_columns(const Matrix& src, std::span<const Index> batch) {
  Matrix out(src.rows(), static_cast<Index>(batch.size()));
  for (std::size_t k = 0; k < batch.size(); ++k) out.col(static_cast<Index>(k)) = src.col(batch[k]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

LeastSquaresProblem::LeastSquaresProblem(const ProblemSpec& spec) : Problem(spec.batch_size) {
  require_dims(spec, 2, "least-squares");
  const Index m = spec.dims[0];
  const Index n = spec.dims[1];
  Rng rng(spec.seed);
  target_ = rng.gaussian(m, n) / std::sqrt(static_cast<double>(n));
  inputs_ = rng.gaussian(n, spec.n_samples);
  outputs_ = target_ * inputs_ + spec.noise * rng.gaussian(m, spec.n_samples);
}

std::vector<std::pair<Index, Index>> LeastSquaresProblem::param_shapes() const {
  return {{target_.rows(), target_.cols()}};
}

std::vector<Matrix> LeastSquaresProblem::initial_params() const {
  return {Matrix::Zero(target_.rows(), target_.cols())};
}

Evaluation LeastSquaresProblem::evaluate(std::span<const Matrix> params,
                                         std::span<const Index> batch) const {
  check_shapes(params);
  if (batch.empty()) throw UsageError("evaluate: empty batch");
  const Matrix A = gather_columns(inputs_, batch);
  const Matrix residual = params[0] * A - gather_columns(outputs_, batch);
  const double count = static_cast<double>(batch.size());
  Evaluation out;
  out.loss = 0.5 * residual.squaredNorm() / count;
  out.grads.push_back(residual * A.transpose() / count);
  return out;
}

double LeastSquaresProblem::smoothness() const {
  const Matrix gram = inputs_ * inputs_.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff() / static_cast<double>(n_samples());
}

Matrix LeastSquaresProblem::minimizer() const {
  const Matrix gram = inputs_ * inputs_.transpose();
  const Matrix rhs = inputs_ * outputs_.transpose();
  return gram.ldlt().solve(rhs).transpose();
}

double LeastSquaresProblem::optimal_loss() const {
  const Matrix x = minimizer();
  return evaluate_full(std::span<const Matrix>(&x, 1)).loss;
}

// ---------------------------------------------------------------------------

Mlp2Problem::Mlp2Problem(const ProblemSpec& spec)
    : Problem(spec.batch_size),
      inputs_(spec.dims.size() > 0 ? spec.dims[0] : 0),
      hidden_(spec.dims.size() > 1 ? spec.dims[1] : 0),
      classes_(spec.dims.size() > 2 ? spec.dims[2] : 0) {
  require_dims(spec, 3, "mlp2");
  if (classes_ < 2) throw UsageError("mlp2: need at least 2 classes");
  Rng rng(spec.seed);
  const Matrix means = rng.gaussian(inputs_, classes_);
  labels_.resize(static_cast<std::size_t>(spec.n_samples));
  features_.resize(inputs_, spec.n_samples);
  for (Index i = 0; i < spec.n_samples; ++i) {
    const auto label = static_cast<Index>(rng.below(static_cast<std::uint64_t>(classes_)));
    labels_[static_cast<std::size_t>(i)] = label;
    for (Index r = 0; r < inputs_; ++r) features_(r, i) = means(r, label) + spec.noise * rng.normal();
  }
  init_.push_back(rng.gaussian(hidden_, inputs_) / std::sqrt(static_cast<double>(inputs_)));
  init_.push_back(rng.gaussian(classes_, hidden_) / std::sqrt(static_cast<double>(hidden_)));
}

std::vector<std::pair<Index, Index>> Mlp2Problem::param_shapes() const {
  return {{hidden_, inputs_}, {classes_, hidden_}};
}

std::vector<Matrix> Mlp2Problem::initial_params() const { return init_; }

Evaluation Mlp2Problem::evaluate(std::span<const Matrix> params, std::span<const Index> batch) const {
  check_shapes(params);
  if (batch.empty()) throw UsageError("evaluate: empty batch");
  const Matrix& w1 = params[0];
  const Matrix& w2 = params[1];
  const Matrix x = gather_columns(features_, batch);
  const Matrix act = (w1 * x).array().tanh().matrix();
  const Matrix logits = w2 * act;
  const double count = static_cast<double>(batch.size());

  // Softmax cross-entropy, column-wise with max shift.
  Matrix dlogits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const double shift = logits.col(j).maxCoeff();
    const Vector e = (logits.col(j).array() - shift).exp().matrix();
    const double z = e.sum();
    const Index y = labels_[static_cast<std::size_t>(batch[static_cast<std::size_t>(j)])];
    loss += std::log(z) + shift - logits(y, j);
    dlogits.col(j) = e / z;
    dlogits(y, j) -= 1.0;
  }
  dlogits /= count;

  Evaluation out;
  out.loss = loss / count;
  const Matrix dact = w2.transpose() * dlogits;
  const Matrix dpre = (dact.array() * (1.0 - act.array().square())).matrix();
  out.grads.push_back(dpre * x.transpose());
  out.grads.push_back(dlogits * act.transpose());
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Problem> make_problem(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::StochasticLeastSquares: return std::make_unique<LeastSquaresProblem>(spec);
    case ProblemKind::Mlp2Classification: return std::make_unique<Mlp2Problem>(spec);
  }
  throw UsageError("make_problem: unknown kind");
}

double grad_check(const Problem& problem, std::span<const Matrix> params, const GradCheckOptions& opts) {
  if (!(opts.h > 0.0)) throw UsageError("grad_check: h must be > 0");
  const Evaluation analytic = problem.evaluate_full(params);

  struct Coord {
    std::size_t slot;
    Index i;
    Index j;
  };
  std::vector<Coord> coords;
  double gscale = 0.0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    gscale = std::max(gscale, analytic.grads[s].cwiseAbs().maxCoeff());
    for (Index j = 0; j < params[s].cols(); ++j) {
      for (Index i = 0; i < params[s].rows(); ++i) coords.push_back({s, i, j});
    }
  }
  if (static_cast<Index>(coords.size()) > opts.max_coords) {
    // Partial Fisher-Yates: the first max_coords entries become the sample.
    Rng rng(opts.seed);
    for (Index k = 0; k < opts.max_coords; ++k) {
      const auto remaining = static_cast<std::uint64_t>(coords.size()) - static_cast<std::uint64_t>(k);
      const auto pick = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng.below(remaining));
      std::swap(coords[static_cast<std::size_t>(k)], coords[pick]);
    }
    coords.resize(static_cast<std::size_t>(opts.max_coords));
  }

  std::vector<Matrix> work(params.begin(), params.end());
  const double floor = std::max(1e-3 * gscale, std::numeric_limits<double>::min());
  double worst = 0.0;
  for (const auto& c : coords) {
    double& x = work[c.slot](c.i, c.j);
    const double saved = x;
    x = saved + opts.h;
    const double up = problem.evaluate_full(work).loss;
    x = saved - opts.h;
    const double down = problem.evaluate_full(work).loss;
    x = saved;
    const double fd = (up - down) / (2.0 * opts.h);
    const double g = analytic.grads[c.slot](c.i, c.j);
    const double denom = std::max({std::abs(g), std::abs(fd), floor});
    worst = std::max(worst, std::abs(g - fd) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

Matrix orthonormal_columns(Rng& rng, Index rows, Index cols) {
  const Matrix g = rng.gaussian(rows, cols);
  const Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

}  // namespace

Matrix ensemble_member(const EnsembleSpec& spec, Index index) {
  if (spec.rows < 1 || spec.cols < 1) throw UsageError("ensemble: shape must be positive");
  if (spec.spectrum_decades < 0 || spec.row_scale_decades < 0 || spec.col_scale_decades < 0) {
    throw UsageError("ensemble: decades must be >= 0");
  }
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const Index r = std::min(spec.rows, spec.cols);
  const Matrix U = orthonormal_columns(rng, spec.rows, r);
  const Matrix V = orthonormal_columns(rng, spec.cols, r);
  Vector sigma(r);
  for (Index i = 0; i < r; ++i) {
    double expo = 0.0;
    if (i == r - 1 && r > 1) {
      expo = -spec.spectrum_decades;
    } else if (i > 0) {
      expo = -spec.spectrum_decades * rng.uniform();
    }
    sigma(i) = std::pow(10.0, expo);
  }
  Vector row_scale(spec.rows);
  for (Index i = 0; i < spec.rows; ++i) row_scale(i) = std::pow(10.0, spec.row_scale_decades * rng.uniform());
  Vector col_scale(spec.cols);
  for (Index j = 0; j < spec.cols; ++j) col_scale(j) = std::pow(10.0, spec.col_scale_decades * rng.uniform());
  return row_scale.asDiagonal() * (U * sigma.asDiagonal() * V.transpose()) * col_scale.asDiagonal();
}

std::vector<Matrix> ensemble(const EnsembleSpec& spec) {
  if (spec.count < 1) throw UsageError("ensemble: count must be >= 1");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (Index i = 0; i < spec.count; ++i) out.push_back(ensemble_member(spec, i));
  return out;
}

}  // namespace muoneq
