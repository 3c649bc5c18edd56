#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasaudit/regard.hpp"

namespace biasaudit::attribution {

/// Membership flags, one per token position.
using Coalition = std::vector<bool>;
using ValueFunction = std::function<double(const Coalition&)>;
/// Evaluates many coalitions at once (one scorer round-trip for HTTP).
using BatchValueFunction = std::function<std::vector<double>(std::span<const Coalition>)>;

struct TokenAttribution {
  std::string token;
  std::size_t index = 0;
  double phi = 0.0;
};

/// Auto picks Exact when the sentence has at most exact_cap tokens.
enum class Mode { Exact, Sampled, Auto };
enum class MaskStrategy { Delete, MaskToken };

struct AttributionParams {
  Mode mode = Mode::Exact;
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
  MaskStrategy mask = MaskStrategy::Delete;
  std::string mask_token = "<mask>";
  std::size_t exact_cap = 20;

  void validate() const;
};

/// Largest exact_cap accepted; 2^24 coalitions is the memory ceiling.
inline constexpr std::size_t kMaxExactTokens = 24;

/// Sentence rebuilt from the members of `c`, single-space joined. Under
/// MaskToken, absent tokens become `mask_token` instead of being dropped.
std::string rebuild(std::span<const std::string> tokens, const Coalition& c, MaskStrategy mask,
                    std::string_view mask_token);

/// f(S) = p_negative of the rebuilt sentence, evaluated in scorer batches.
BatchValueFunction negative_regard_value(std::vector<std::string> tokens, const regard::Scorer& scorer,
                                         MaskStrategy mask = MaskStrategy::Delete,
                                         std::string mask_token = "<mask>");

/// Exact Shapley values over all 2^n coalitions:
///   phi_i = sum_{S without i} |S|!(n-|S|-1)!/n! (f(S+i) - f(S))
/// Every coalition is evaluated once. Throws InvalidArgument when
/// n > exact_cap.
std::vector<TokenAttribution> shapley_exact(std::span<const std::string> tokens, const BatchValueFunction& f,
                                            std::size_t exact_cap = 20);
std::vector<TokenAttribution> shapley_exact(std::span<const std::string> tokens, const ValueFunction& f,
                                            std::size_t exact_cap = 20);

/// Permutation-sampling estimate: the mean marginal contribution of each
/// token over `samples` seeded uniform permutations. Coalition values are
/// memoised for the duration of the call.
std::vector<TokenAttribution> shapley_sampled(std::span<const std::string> tokens, const BatchValueFunction& f,
                                              std::size_t samples, std::uint64_t seed);
std::vector<TokenAttribution> shapley_sampled(std::span<const std::string> tokens, const ValueFunction& f,
                                              std::size_t samples, std::uint64_t seed);

/// Whitespace tokens of `sentence` attributed against p_negative of `scorer`.
std::vector<TokenAttribution> attribute(std::string_view sentence, const regard::Scorer& scorer,
                                        const AttributionParams& params);

/// Positions chosen by low_regard_words(), in selection order.
std::vector<std::size_t> select_low_regard(std::span<const TokenAttribution> attribs, std::size_t k = 5);

/// Tokens with phi > 0, highest first (ties by position), punctuation
/// trimmed, case-insensitive duplicates dropped, at most k.
std::vector<std::string> low_regard_words(std::span<const TokenAttribution> attribs, std::size_t k = 5);

}  // namespace biasaudit::attribution
