#include "biasaudit/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "biasaudit/error.hpp"
#include "biasaudit/rng.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit::attribution {

namespace {

BatchValueFunction batched(const ValueFunction& f) {
  return [&f](std::span<const Coalition> cs) {
    std::vector<double> out;
    out.reserve(cs.size());
    for (const auto& c : cs) out.push_back(f(c));
    return out;
  };
}

std::vector<TokenAttribution> make_result(std::span<const std::string> tokens, const std::vector<double>& phi) {
  std::vector<TokenAttribution> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({tokens[i], i, phi[i]});
  return out;
}

}  // namespace

void AttributionParams::validate() const {
  if (samples < 1) fail(ErrorCode::InvalidArgument, "attribution samples must be >= 1");
  if (exact_cap > kMaxExactTokens)
    fail(ErrorCode::InvalidArgument, "exact_cap may not exceed " + std::to_string(kMaxExactTokens));
}

std::string rebuild(std::span<const std::string> tokens, const Coalition& c, MaskStrategy mask,
                    std::string_view mask_token) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool present = c[i];
    if (!present && mask == MaskStrategy::Delete) continue;
    if (!out.empty()) out += ' ';
    if (present) {
      out += tokens[i];
    } else {
      out += mask_token;
    }
  }
  return out;
}

BatchValueFunction negative_regard_value(std::vector<std::string> tokens, const regard::Scorer& scorer,
                                         MaskStrategy mask, std::string mask_token) {
  return [tokens = std::move(tokens), &scorer, mask, mask_token = std::move(mask_token)](
             std::span<const Coalition> cs) {
    std::vector<std::string> sentences;
    sentences.reserve(cs.size());
    for (const auto& c : cs) sentences.push_back(rebuild(tokens, c, mask, mask_token));
    const auto results = scorer.score_batch(sentences);
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.p_negative);
    return out;
  };
}

std::vector<TokenAttribution> shapley_exact(std::span<const std::string> tokens, const BatchValueFunction& f,
                                            std::size_t exact_cap) {
  const auto n = tokens.size();
  if (n > exact_cap || n > kMaxExactTokens)
    fail(ErrorCode::InvalidArgument, "exact Shapley refused for " + std::to_string(n) +
                                         " tokens (cap " + std::to_string(exact_cap) + "); use sampled mode");
  if (n == 0) return {};

  const std::size_t subsets = std::size_t{1} << n;
  std::vector<double> value(subsets);
  // Evaluate in chunks so HTTP scorers see bounded batches.
  constexpr std::size_t kChunk = 4096;
  std::vector<Coalition> batch;
  for (std::size_t base = 0; base < subsets; base += kChunk) {
    const auto end = std::min(subsets, base + kChunk);
    batch.clear();
    for (std::size_t mask = base; mask < end; ++mask) {
      Coalition c(n);
      for (std::size_t i = 0; i < n; ++i) c[i] = (mask >> i) & 1U;
      batch.push_back(std::move(c));
    }
    const auto vals = f(batch);
    if (vals.size() != batch.size()) fail(ErrorCode::Backend, "value function returned the wrong batch size");
    std::copy(vals.begin(), vals.end(), value.begin() + static_cast<std::ptrdiff_t>(base));
  }

  // weight[s] = s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
  std::vector<double> weight(n);
  double binom = 1.0;
  for (std::size_t s = 0; s < n; ++s) {
    weight[s] = 1.0 / (static_cast<double>(n) * binom);
    binom = binom * static_cast<double>(n - 1 - s) / static_cast<double>(s + 1);
  }

  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      acc += weight[s] * (value[mask | bit] - value[mask]);
    }
    phi[i] = acc;
  }
  return make_result(tokens, phi);
}

std::vector<TokenAttribution> shapley_exact(std::span<const std::string> tokens, const ValueFunction& f,
                                            std::size_t exact_cap) {
  return shapley_exact(tokens, batched(f), exact_cap);
}

std::vector<TokenAttribution> shapley_sampled(std::span<const std::string> tokens, const BatchValueFunction& f,
                                              std::size_t samples, std::uint64_t seed) {
  if (samples < 1) fail(ErrorCode::InvalidArgument, "Shapley sampling needs at least one permutation");
  const auto n = tokens.size();
  if (n == 0) return {};

  std::unordered_map<Coalition, double> memo;
  Lcg64 rng(seed);
  std::vector<std::size_t> order(n);
  std::vector<double> sum(n, 0.0);
  std::vector<Coalition> chain(n + 1);
  std::vector<Coalition> missing;

  for (std::size_t m = 0; m < samples; ++m) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    chain[0].assign(n, false);
    for (std::size_t k = 0; k < n; ++k) {
      chain[k + 1] = chain[k];
      chain[k + 1][order[k]] = true;
    }
    missing.clear();
    for (const auto& c : chain)
      if (!memo.contains(c)) missing.push_back(c);  // chain members are distinct
    if (!missing.empty()) {
      const auto vals = f(missing);
      if (vals.size() != missing.size()) fail(ErrorCode::Backend, "value function returned the wrong batch size");
      for (std::size_t k = 0; k < missing.size(); ++k) memo.emplace(missing[k], vals[k]);
    }
    for (std::size_t k = 0; k < n; ++k) sum[order[k]] += memo.at(chain[k + 1]) - memo.at(chain[k]);
  }

  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) phi[i] = sum[i] / static_cast<double>(samples);
  return make_result(tokens, phi);
}

std::vector<TokenAttribution> shapley_sampled(std::span<const std::string> tokens, const ValueFunction& f,
                                              std::size_t samples, std::uint64_t seed) {
  return shapley_sampled(tokens, batched(f), samples, seed);
}

std::vector<TokenAttribution> attribute(std::string_view sentence, const regard::Scorer& scorer,
                                        const AttributionParams& params) {
  params.validate();
  auto tokens = text::split_whitespace(sentence);
  const auto f = negative_regard_value(tokens, scorer, params.mask, params.mask_token);
  const bool exact = params.mode == Mode::Exact || (params.mode == Mode::Auto && tokens.size() <= params.exact_cap);
  if (exact) return shapley_exact(tokens, f, params.exact_cap);
  return shapley_sampled(tokens, f, params.samples, params.seed);
}

namespace {

std::string selection_word(const TokenAttribution& a) {
  auto word = text::strip_punct(a.token);
  return word.empty() ? a.token : word;
}

}  // namespace

std::vector<std::size_t> select_low_regard(std::span<const TokenAttribution> attribs, std::size_t k) {
  std::vector<const TokenAttribution*> positive;
  for (const auto& a : attribs)
    if (a.phi > 0.0) positive.push_back(&a);
  std::sort(positive.begin(), positive.end(), [](const TokenAttribution* a, const TokenAttribution* b) {
    if (a->phi != b->phi) return a->phi > b->phi;
    return a->index < b->index;
  });

  std::vector<std::size_t> out;
  std::unordered_set<std::string> seen;
  for (const auto* a : positive) {
    if (out.size() >= k) break;
    std::string key;
    for (char c : selection_word(*a)) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!seen.insert(key).second) continue;
    out.push_back(a->index);
  }
  return out;
}

std::vector<std::string> low_regard_words(std::span<const TokenAttribution> attribs, std::size_t k) {
  std::vector<std::string> out;
  for (auto idx : select_low_regard(attribs, k)) {
    const auto it = std::find_if(attribs.begin(), attribs.end(),
                                 [idx](const TokenAttribution& a) { return a.index == idx; });
    out.push_back(selection_word(*it));
  }
  return out;
}

}  // namespace biasaudit::attribution
