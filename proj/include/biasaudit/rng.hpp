#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace biasaudit {

/// 64-bit linear congruential generator with Knuth's MMIX constants:
///   state' = state * 6364136223846793005 + 1442695040888963407 (mod 2^64)
/// Every seeded procedure in the toolkit (corpus sampling, Shapley
/// permutations, t-SNE initialisation) draws from this generator so results
/// can be reproduced from the constants alone.
class Lcg64 {
public:
  static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
  static constexpr std::uint64_t kIncrement = 1442695040888963407ULL;

  explicit Lcg64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ = state_ * kMultiplier + kIncrement;
    return state_;
  }

  /// Uniform integer in [0, bound). Uses the high 32 bits, which have the
  /// longest period in an LCG; bound must be in [1, 2^32].
  std::uint64_t below(std::uint64_t bound) noexcept { return (next() >> 32) % bound; }

  /// Uniform real in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call, the sine branch is
  /// discarded so the stream position depends only on the call count).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::uint64_t state_;
};

}  // namespace biasaudit
