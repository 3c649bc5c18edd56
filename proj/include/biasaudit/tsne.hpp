#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "biasaudit/analysis.hpp"

namespace biasaudit::analysis {

struct TsneParams {
  double perplexity = 30.0;  // clamped to (N-1)/3 for small inputs
  double learning_rate = 200.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 0;
  int checkpoint_every = 50;

  void validate() const;
};

struct KlCheckpoint {
  int iteration = 0;
  double kl = 0.0;
};

struct TsneResult {
  std::vector<std::array<double, 2>> points;
  /// KL(P||Q) against the unexaggerated P at iteration 0, every
  /// checkpoint_every iterations, and at the final iteration.
  std::vector<KlCheckpoint> checkpoints;
  double perplexity_used = 0.0;
};

/// Exact O(N^2) t-SNE on a row-major N x N matrix of squared distances.
/// Bandwidths come from bisection on the conditional entropy (tolerance
/// 1e-5, at most 50 steps); P is symmetrised and floored at 1e-12; updates
/// use momentum with per-coordinate adaptive gains. Deterministic for a
/// fixed seed.
TsneResult tsne_from_distances(std::size_t n, std::span<const double> squared_distances, const TsneParams& params);

/// Squared Euclidean distances between dense points.
TsneResult tsne(std::span<const std::vector<double>> points, const TsneParams& params);

/// Squared Euclidean distances between TF-IDF rows.
TsneResult tsne(const TfidfMatrix& matrix, const TsneParams& params);

/// KL(P||Q) for a symmetric joint P (row-major, zero diagonal) and layout Y.
double tsne_kl(std::size_t n, std::span<const double> joint_p, std::span<const std::array<double, 2>> y);

}  // namespace biasaudit::analysis
