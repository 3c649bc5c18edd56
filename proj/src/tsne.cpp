#include "biasaudit/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "biasaudit/error.hpp"
#include "biasaudit/rng.hpp"

namespace biasaudit::analysis {

namespace {

constexpr double kEntropyTolerance = 1e-5;
constexpr int kMaxBisection = 50;
constexpr double kPFloor = 1e-12;
constexpr double kMinGain = 0.01;

// Conditional P(j|i) for one row at precision beta; returns the entropy.
double conditional_row(std::span<const double> dist_row, std::size_t self, double beta, std::span<double> out) {
  // Shift by the smallest off-diagonal distance for numerical stability; it
  // cancels in the normalisation.
  double min_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < dist_row.size(); ++j)
    if (j != self) min_d = std::min(min_d, dist_row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < dist_row.size(); ++j) {
    out[j] = j == self ? 0.0 : std::exp(-beta * (dist_row[j] - min_d));
    sum += out[j];
  }
  double weighted = 0.0;
  for (std::size_t j = 0; j < dist_row.size(); ++j) {
    out[j] /= sum;
    weighted += out[j] * (dist_row[j] - min_d);
  }
  return std::log(sum) + beta * weighted;
}

std::vector<double> joint_probabilities(std::size_t n, std::span<const double> d, double perplexity) {
  const double target = std::log(perplexity);
  std::vector<double> cond(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = d.subspan(i * n, n);
    auto out = std::span<double>(cond).subspan(i * n, n);
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double h = conditional_row(row, i, beta, out);
    for (int step = 0; step < kMaxBisection && std::abs(h - target) > kEntropyTolerance; ++step) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
      }
      h = conditional_row(row, i, beta, out);
    }
  }

  std::vector<double> p(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / denom, kPFloor);
  return p;
}

}  // namespace

void TsneParams::validate() const {
  if (perplexity < 2.0) fail(ErrorCode::InvalidArgument, "t-SNE perplexity must be >= 2");
  if (iterations < 1) fail(ErrorCode::InvalidArgument, "t-SNE iterations must be >= 1");
  if (learning_rate <= 0.0) fail(ErrorCode::InvalidArgument, "t-SNE learning rate must be > 0");
  if (checkpoint_every < 1) fail(ErrorCode::InvalidArgument, "t-SNE checkpoint interval must be >= 1");
}

double tsne_kl(std::size_t n, std::span<const double> joint_p, std::span<const std::array<double, 2>> y) {
  double z = 0.0;
  std::vector<double> num(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[i][0] - y[j][0];
      const double dy = y[i][1] - y[j][1];
      num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
      z += num[i * n + j];
    }
  double kl = 0.0;
  for (std::size_t k = 0; k < n * n; ++k) {
    if (joint_p[k] <= 0.0) continue;
    const double q = std::max(num[k] / z, std::numeric_limits<double>::min());
    kl += joint_p[k] * std::log(joint_p[k] / q);
  }
  return kl;
}

TsneResult tsne_from_distances(std::size_t n, std::span<const double> d, const TsneParams& params) {
  params.validate();
  if (n < 5) fail(ErrorCode::InvalidArgument, "t-SNE needs at least 5 points, got " + std::to_string(n));
  if (d.size() != n * n) fail(ErrorCode::InvalidArgument, "distance matrix must be N x N");
  bool degenerate = true;
  for (std::size_t k = 0; k < d.size() && degenerate; ++k) degenerate = d[k] == 0.0;
  if (degenerate)
    fail(ErrorCode::InvalidArgument, "t-SNE input rows are all identical; the perplexity search cannot converge");

  TsneResult result;
  result.perplexity_used = std::min(params.perplexity, static_cast<double>(n - 1) / 3.0);
  const auto p = joint_probabilities(n, d, result.perplexity_used);

  Lcg64 rng(params.seed);
  std::vector<std::array<double, 2>> y(n);
  for (auto& pt : y) {
    pt[0] = rng.normal() * 1e-4;
    pt[1] = rng.normal() * 1e-4;
  }
  std::vector<std::array<double, 2>> velocity(n, {0.0, 0.0});
  std::vector<std::array<double, 2>> gains(n, {1.0, 1.0});
  std::vector<std::array<double, 2>> grad(n);
  std::vector<double> num(n * n, 0.0);

  result.checkpoints.push_back({0, tsne_kl(n, p, y)});

  for (int iter = 1; iter <= params.iterations; ++iter) {
    const double exaggeration = iter <= params.exaggeration_iterations ? params.early_exaggeration : 1.0;
    const double momentum = iter <= params.momentum_switch ? params.initial_momentum : params.final_momentum;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[i][0] - y[j][0];
        const double dy = y[i][1] - y[j][1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = q;
        num[j * n + i] = q;
        z += 2.0 * q;
      }

    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = num[i * n + j];
        const double coeff = (exaggeration * p[i * n + j] - w / z) * w;
        gx += coeff * (y[i][0] - y[j][0]);
        gy += coeff * (y[i][1] - y[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    }

    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) {
        auto& g = gains[i][k];
        g = (grad[i][k] > 0.0) != (velocity[i][k] > 0.0) ? g + 0.2 : g * 0.8;
        g = std::max(g, kMinGain);
        velocity[i][k] = momentum * velocity[i][k] - params.learning_rate * g * grad[i][k];
        y[i][k] += velocity[i][k];
      }

    std::array<double, 2> mean = {0.0, 0.0};
    for (const auto& pt : y) {
      mean[0] += pt[0];
      mean[1] += pt[1];
    }
    for (auto& pt : y) {
      pt[0] -= mean[0] / static_cast<double>(n);
      pt[1] -= mean[1] / static_cast<double>(n);
    }

    if (iter % params.checkpoint_every == 0 || iter == params.iterations)
      result.checkpoints.push_back({iter, tsne_kl(n, p, y)});
  }

  result.points = std::move(y);
  return result;
}

TsneResult tsne(std::span<const std::vector<double>> points, const TsneParams& params) {
  const auto n = points.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double diff = points[i][k] - points[j][k];
        s += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = s;
    }
  return tsne_from_distances(n, d, params);
}

TsneResult tsne(const TfidfMatrix& matrix, const TsneParams& params) {
  const auto n = matrix.rows.size();
  std::vector<double> self(n);
  for (std::size_t i = 0; i < n; ++i) self[i] = matrix.dot(i, i);
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d[i * n + j] = d[j * n + i] = std::max(0.0, self[i] + self[j] - 2.0 * matrix.dot(i, j));
  return tsne_from_distances(n, d, params);
}

}  // namespace biasaudit::analysis
