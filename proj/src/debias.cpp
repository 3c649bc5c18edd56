#include "biasaudit/debias.hpp"

#include <optional>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"

namespace biasaudit::debias {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Templates Templates::load(const std::filesystem::path& data_dir) {
  const auto dir = data_dir / "templates";
  const auto read = [&](const char* name) {
    auto s = io::read_file(dir / name);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
  };
  return {read("reason.txt"), read("rewrite.txt"), read("baseline.txt")};
}

void DebiasParams::validate() const {
  if (!(min_similarity >= 0.0 && min_similarity <= 1.0))
    fail(ErrorCode::InvalidArgument, "min_similarity must be in [0, 1]");
  if (max_rounds < 1) fail(ErrorCode::InvalidArgument, "max_rounds must be >= 1");
}

std::string_view to_string(Method m) { return m == Method::Cot ? "cot" : "baseline"; }

std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [key, value] : vars) {
          if (key == name) {
            out += value;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string make_reason_prompt(const Templates& t, std::string_view sentence, std::span<const std::string> words) {
  if (words.empty()) fail(ErrorCode::InvalidArgument, "reason prompt needs at least one low-regard word");
  std::string joined;
  for (const auto& w : words) {
    if (!joined.empty()) joined += ", ";
    joined += w;
  }
  const std::pair<std::string_view, std::string_view> vars[] = {{"words", joined}, {"sentence", sentence}};
  return fill_template(t.reason, vars);
}

std::string make_rewrite_prompt(const Templates& t, std::string_view sentence, std::string_view reason) {
  if (reason.empty()) fail(ErrorCode::InvalidArgument, "rewrite prompt needs a non-empty reason");
  const std::pair<std::string_view, std::string_view> vars[] = {{"reason", reason}, {"sentence", sentence}};
  return fill_template(t.rewrite, vars);
}

std::string make_baseline_prompt(const Templates& t, std::string_view sentence) {
  const std::pair<std::string_view, std::string_view> vars[] = {{"sentence", sentence}};
  return fill_template(t.baseline, vars);
}

Debiaser::Debiaser(CompleteFn llm, const regard::Scorer& scorer, attribution::AttributionParams attribution,
                   analysis::Tokenizer tokenizer, Templates templates, DebiasParams params)
    : llm_(std::move(llm)),
      scorer_(scorer),
      attribution_(std::move(attribution)),
      tokenizer_(std::move(tokenizer)),
      templates_(std::move(templates)),
      params_(params) {
  params_.validate();
  attribution_.validate();
}

double Debiaser::similarity(std::string_view a, std::string_view b) const {
  return analysis::pair_cosine(tokenizer_(a), tokenizer_(b));
}

bool Debiaser::passes(const DebiasResult& r) const {
  return r.gain() >= params_.min_gain && r.similarity >= params_.min_similarity;
}

DebiasResult Debiaser::start(std::string_view sentence, Method method) const {
  if (trim(sentence).empty()) fail(ErrorCode::InvalidArgument, "cannot debias an empty sentence");
  DebiasResult r;
  r.method = method;
  r.original = std::string(sentence);
  r.rewritten = r.original;
  r.regard_before = scorer_.score(sentence);
  r.regard_after = r.regard_before;
  r.similarity = 1.0;
  r.skipped = r.regard_before.scalar() >= params_.skip_threshold;
  return r;
}

DebiasResult Debiaser::cot(std::string_view sentence) const {
  auto result = start(sentence, Method::Cot);
  if (result.skipped) return result;

  std::optional<DebiasResult> best;
  std::string current = result.original;
  int rounds = 0;
  for (int round = 1; round <= params_.max_rounds; ++round) {
    const auto attribs = attribution::attribute(current, scorer_, attribution_);
    const auto words = attribution::low_regard_words(attribs, params_.k);
    if (words.empty()) {
      if (!best) result.nothing_to_rewrite = true;
      break;
    }
    auto candidate = result;
    candidate.low_words = words;
    candidate.reason = trim(llm_(make_reason_prompt(templates_, current, words)));
    candidate.rewritten = trim(llm_(make_rewrite_prompt(templates_, current, candidate.reason)));
    candidate.regard_after = scorer_.score(candidate.rewritten);
    candidate.similarity = similarity(result.original, candidate.rewritten);
    candidate.rounds_used = round;
    rounds = round;

    if (passes(candidate)) {
      candidate.accepted = true;
      return candidate;
    }
    if (!best || candidate.regard_after.scalar() > best->regard_after.scalar()) best = candidate;
    current = candidate.rewritten;
  }
  if (best) {
    best->rounds_used = rounds;
    return *best;
  }
  return result;
}

DebiasResult Debiaser::baseline(std::string_view sentence) const {
  auto result = start(sentence, Method::Baseline);
  if (result.skipped) return result;
  result.rewritten = trim(llm_(make_baseline_prompt(templates_, result.original)));
  result.regard_after = scorer_.score(result.rewritten);
  result.similarity = similarity(result.original, result.rewritten);
  result.rounds_used = 1;
  result.accepted = passes(result);
  return result;
}

}  // namespace biasaudit::debias
