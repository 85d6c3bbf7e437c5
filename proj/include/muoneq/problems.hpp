#pragma once

// Synthetic stochastic objectives with analytic gradients, and the
// controlled-spectrum matrix ensembles used by the NS sweeps.

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "muoneq/linalg.hpp"
#include "muoneq/rng.hpp"

namespace muoneq {

enum class ProblemKind { StochasticLeastSquares, Mlp2Classification };

std::string_view to_string(ProblemKind kind);
/// "least-squares" | "mlp2"
ProblemKind parse_problem_kind(std::string_view text);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::StochasticLeastSquares;
  /// Least squares: {rows, cols} of X. Two-layer network: {inputs, hidden, classes}.
  std::vector<Index> dims{64, 32};
  Index n_samples = 512;
  Index batch_size = 32;
  /// Label noise for least squares; within-class spread for the network.
  double noise = 0.01;
  std::uint64_t seed = 42;
};

struct Evaluation {
  double loss = 0;
  std::vector<Matrix> grads;
};

/// f(X) = mean over a fixed dataset of per-sample losses; mini-batches are
/// drawn uniformly with replacement so E[batch grad] = full grad.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual ProblemKind kind() const = 0;
  virtual std::vector<Matrix> initial_params() const = 0;
  virtual Index n_samples() const = 0;
  virtual Evaluation evaluate(std::span<const Matrix> params, std::span<const Index> batch) const = 0;

  Evaluation evaluate_full(std::span<const Matrix> params) const;
  Index batch_size() const { return batch_size_; }
  std::vector<Index> sample_batch(Rng& rng) const;

 protected:
  explicit Problem(Index batch_size) : batch_size_(batch_size) {}
  void check_shapes(std::span<const Matrix> params) const;
  virtual std::vector<std::pair<Index, Index>> param_shapes() const = 0;

 private:
  Index batch_size_;
};

/// f(X) = (1/2N) sum_i ||X a_i - b_i||^2 with b_i = X* a_i + noise * nu_i.
class LeastSquaresProblem final : public Problem {
 public:
  explicit LeastSquaresProblem(const ProblemSpec& spec);

  ProblemKind kind() const override { return ProblemKind::StochasticLeastSquares; }
  std::vector<Matrix> initial_params() const override;
  Index n_samples() const override { return inputs_.cols(); }
  Evaluation evaluate(std::span<const Matrix> params, std::span<const Index> batch) const override;

  const Matrix& target() const { return target_; }
  const Matrix& inputs() const { return inputs_; }    // n x N, columns a_i
  const Matrix& outputs() const { return outputs_; }  // m x N, columns b_i
  /// L = lambda_max(A A^T) / N.
  double smoothness() const;
  /// argmin f = B A^T (A A^T)^{-1}.
  Matrix minimizer() const;
  double optimal_loss() const;

 protected:
  std::vector<std::pair<Index, Index>> param_shapes() const override;

 private:
  Matrix target_;
  Matrix inputs_;
  Matrix outputs_;
};

/// Two-layer tanh network logits = W2 tanh(W1 x), softmax cross-entropy on a
/// Gaussian-mixture dataset. Parameters: {W1 (hidden x inputs), W2 (classes x hidden)}.
class Mlp2Problem final : public Problem {
 public:
  explicit Mlp2Problem(const ProblemSpec& spec);

  ProblemKind kind() const override { return ProblemKind::Mlp2Classification; }
  std::vector<Matrix> initial_params() const override;
  Index n_samples() const override { return features_.cols(); }
  Evaluation evaluate(std::span<const Matrix> params, std::span<const Index> batch) const override;

  const Matrix& features() const { return features_; }
  const std::vector<Index>& labels() const { return labels_; }

 protected:
  std::vector<std::pair<Index, Index>> param_shapes() const override;

 private:
  Index inputs_;
  Index hidden_;
  Index classes_;
  Matrix features_;
  std::vector<Index> labels_;
  std::vector<Matrix> init_;
};

std::unique_ptr<Problem> make_problem(const ProblemSpec& spec);

struct GradCheckOptions {
  double h = 1e-6;
  /// Check every coordinate when the parameter count is at most this,
  /// otherwise a seeded random subset of this size.
  Index max_coords = 2000;
  std::uint64_t seed = 0;
};

/// Max over checked coordinates of |g - fd| / max(|g|, |fd|, 1e-3 * max|g|),
/// where fd is the central difference of the full-data loss.
double grad_check(const Problem& problem, std::span<const Matrix> params,
                  const GradCheckOptions& opts = {});

struct EnsembleSpec {
  Index rows = 64;
  Index cols = 64;
  double spectrum_decades = 0;
  double row_scale_decades = 0;
  double col_scale_decades = 0;
  Index count = 1;
  std::uint64_t seed = 42;
};

/// diag(r) U diag(sigma) V^T diag(c) with U, V orthonormal (QR of Gaussians),
/// sigma log-uniform on [10^-spectrum, 1] with both endpoints present, and
/// r, c log-uniform on [1, 10^decades]. Member i uses derive_seed(seed, i).
Matrix ensemble_member(const EnsembleSpec& spec, Index index);
std::vector<Matrix> ensemble(const EnsembleSpec& spec);

}  // namespace muoneq
