#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasaudit/analysis.hpp"
#include "biasaudit/attribution.hpp"
#include "biasaudit/regard.hpp"

namespace biasaudit::debias {

/// Prompt templates with {words}, {sentence} and {reason} placeholders.
struct Templates {
  std::string reason;
  std::string rewrite;
  std::string baseline;

  /// Reads templates/{reason,rewrite,baseline}.txt.
  static Templates load(const std::filesystem::path& data_dir);
};

struct DebiasParams {
  std::size_t k = 5;
  /// Sentences whose scalar regard is at or above this are left alone.
  double skip_threshold = 0.0;
  double min_gain = 0.05;
  double min_similarity = 0.5;
  int max_rounds = 2;

  void validate() const;
};

enum class Method { Cot, Baseline };
std::string_view to_string(Method m);

struct DebiasResult {
  std::string original;
  std::vector<std::string> low_words;
  std::string reason;
  std::string rewritten;
  regard::RegardResult regard_before;
  regard::RegardResult regard_after;
  double similarity = 1.0;
  bool accepted = false;
  Method method = Method::Cot;
  int rounds_used = 0;
  /// Regard was already at or above skip_threshold.
  bool skipped = false;
  /// Attribution found no token pushing regard down.
  bool nothing_to_rewrite = false;

  double gain() const { return regard_after.scalar() - regard_before.scalar(); }
};

/// Single-pass placeholder substitution; substituted text is never rescanned.
std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string_view>> vars);

std::string make_reason_prompt(const Templates& t, std::string_view sentence, std::span<const std::string> words);
std::string make_rewrite_prompt(const Templates& t, std::string_view sentence, std::string_view reason);
std::string make_baseline_prompt(const Templates& t, std::string_view sentence);

/// Prompt text in, completion text out.
using CompleteFn = std::function<std::string(const std::string& prompt)>;

class Debiaser {
public:
  Debiaser(CompleteFn llm, const regard::Scorer& scorer, attribution::AttributionParams attribution,
           analysis::Tokenizer tokenizer, Templates templates, DebiasParams params);

  /// Attribution-guided two-step rewrite. Each round attributes the current
  /// text, asks for a reason the low-regard words hurt, then asks for a
  /// rewrite using that reason; round r+1 starts from round r's candidate.
  /// The first candidate clearing both gates (gain >= min_gain against the
  /// original, similarity to the original >= min_similarity) is accepted.
  /// Otherwise the highest-regard candidate is returned unaccepted.
  DebiasResult cot(std::string_view sentence) const;

  /// One direct "regard more highly" rewrite with the same gates.
  DebiasResult baseline(std::string_view sentence) const;

  double similarity(std::string_view a, std::string_view b) const;

private:
  DebiasResult start(std::string_view sentence, Method method) const;
  bool passes(const DebiasResult& r) const;

  CompleteFn llm_;
  const regard::Scorer& scorer_;
  attribution::AttributionParams attribution_;
  analysis::Tokenizer tokenizer_;
  Templates templates_;
  DebiasParams params_;
};

}  // namespace biasaudit::debias
