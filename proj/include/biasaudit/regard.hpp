#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "biasaudit/promptgen.hpp"
#include "biasaudit/transport.hpp"

namespace biasaudit::regard {

/// Class probabilities for one text. The scalar regard is p_positive -
/// p_negative, so it ignores how the remaining mass splits between neutral
/// and other.
struct RegardResult {
  double p_negative = 0.0;
  double p_neutral = 1.0;
  double p_positive = 0.0;
  double p_other = 0.0;

  double scalar() const noexcept { return p_positive - p_negative; }
  /// Throws Backend if a component is outside [0,1] or the sum is off by
  /// more than 1e-6.
  void validate() const;
};

class Scorer {
public:
  virtual ~Scorer() = default;
  /// Order-aligned with `texts`.
  virtual std::vector<RegardResult> score_batch(std::span<const std::string> texts) const = 0;
  RegardResult score(std::string_view text) const;
  /// Short description recorded in run manifests.
  virtual std::string describe() const = 0;
};

/// Deterministic word-list scorer. With pos/neg the counts of lexicon
/// tokens, raw = (pos - neg) / max(1, pos + neg); p_positive = max(raw, 0),
/// p_negative = max(-raw, 0), p_neutral = 1 - |raw|, p_other = 0.
class LexiconScorer final : public Scorer {
public:
  LexiconScorer(std::unordered_set<std::string> positive, std::unordered_set<std::string> negative);
  /// Reads lexicon/positive.txt and lexicon/negative.txt.
  static std::shared_ptr<LexiconScorer> load(const std::filesystem::path& data_dir);

  std::vector<RegardResult> score_batch(std::span<const std::string> texts) const override;
  std::string describe() const override;

  RegardResult score_counts(std::size_t positive, std::size_t negative) const;
  bool is_positive(const std::string& word) const { return positive_.contains(word); }
  bool is_negative(const std::string& word) const { return negative_.contains(word); }

private:
  std::unordered_set<std::string> positive_;
  std::unordered_set<std::string> negative_;
};

/// Client for the regard classifier service:
///   POST {endpoint}/v1/regard  {"texts": [...]}  (at most 64 per request)
///   -> {"results": [{"negative", "neutral", "positive", "other"}, ...]}
///   GET  {endpoint}/healthz -> 200
class HttpScorer final : public Scorer {
public:
  static constexpr std::size_t kMaxBatch = 64;

  HttpScorer(std::string endpoint, std::shared_ptr<http::Transport> transport = nullptr);

  /// Throws Backend unless /healthz answers 200.
  void check_health() const;
  std::vector<RegardResult> score_batch(std::span<const std::string> texts) const override;
  std::string describe() const override;

private:
  std::string endpoint_;
  std::shared_ptr<http::Transport> transport_;
};

struct RegardDiffRow {
  promptgen::Identity identity = promptgen::Identity::Control;
  double mean_scalar = 0.0;
  /// mean(control) - mean(identity); positive means the identity is
  /// portrayed with lower regard than control.
  double diff_vs_control = 0.0;
  std::size_t n = 0;
};

using LabeledRegard = std::pair<promptgen::Identity, RegardResult>;

/// One row per identity present, in canonical identity order. Means are
/// accumulated over sorted values so the result does not depend on record
/// order.
std::vector<RegardDiffRow> group_diff(std::span<const LabeledRegard> records);

/// Mean of values, summed in ascending order.
double stable_mean(std::vector<double> values);

}  // namespace biasaudit::regard
