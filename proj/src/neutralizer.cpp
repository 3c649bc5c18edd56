#include "biasaudit/neutralizer.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"

namespace biasaudit::neutralizer {

namespace {

struct Word {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string key;  // lowercase, curly apostrophes folded to '
};

bool ascii_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

// Byte length of the UTF-8 punctuation sequence at i that must never be
// absorbed into a word (curly quotes, dashes, nbsp), or 0.
std::size_t punct_seq(std::string_view t, std::size_t i) {
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(t[k]); };
  if (i + 2 < t.size() && b(i) == 0xE2 && b(i + 1) == 0x80) {
    const auto x = b(i + 2);
    if ((x >= 0x93 && x <= 0x9F) || x == 0xA6) return 3;
  }
  if (i + 1 < t.size() && b(i) == 0xC2 && (b(i + 1) == 0xA0 || b(i + 1) == 0xAB || b(i + 1) == 0xBB))
    return 2;
  return 0;
}

bool curly_apostrophe(std::string_view t, std::size_t i) {
  return i + 2 < t.size() && static_cast<unsigned char>(t[i]) == 0xE2 &&
         static_cast<unsigned char>(t[i + 1]) == 0x80 && static_cast<unsigned char>(t[i + 2]) == 0x99;
}

bool letter_at(std::string_view t, std::size_t i) {
  const auto c = static_cast<unsigned char>(t[i]);
  if (ascii_alpha(c)) return true;
  return c >= 0x80 && punct_seq(t, i) == 0;
}

std::vector<Word> scan_words(std::string_view t) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!letter_at(t, i)) {
      const auto p = punct_seq(t, i);
      i += p ? p : 1;
      continue;
    }
    Word w;
    w.start = i;
    while (i < t.size()) {
      if (curly_apostrophe(t, i) && i + 3 < t.size() && letter_at(t, i + 3)) {
        w.key += '\'';
        i += 3;
      } else if (t[i] == '\'' && i + 1 < t.size() && letter_at(t, i + 1)) {
        w.key += '\'';
        ++i;
      } else if (letter_at(t, i)) {
        w.key += static_cast<char>(std::tolower(static_cast<unsigned char>(t[i])));
        ++i;
      } else {
        break;
      }
    }
    w.end = i;
    words.push_back(std::move(w));
  }
  return words;
}

bool all_space(std::string_view t, std::size_t from, std::size_t to) {
  if (from >= to) return false;
  for (auto k = from; k < to; ++k)
    if (!std::isspace(static_cast<unsigned char>(t[k]))) return false;
  return true;
}

bool is_capitalized(std::string_view t, const Word& w) { return t[w.start] >= 'A' && t[w.start] <= 'Z'; }

std::string with_case_of(std::string_view matched, std::string replacement) {
  if (!matched.empty() && !replacement.empty() && matched.front() >= 'A' && matched.front() <= 'Z')
    replacement.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement.front())));
  return replacement;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

// Possessive "'s" suffix stripped from a key.
std::string_view base_key(std::string_view key) {
  if (key.size() > 2 && key.ends_with("'s")) key.remove_suffix(2);
  return key;
}

// Participles after which "he's"/"she's" means "has".
constexpr std::string_view kHaveAuxNext[] = {"been", "got", "gotten", "had"};

// Single capitalized tokens after these read as places ("born in Lahore").
constexpr std::string_view kLocativeBefore[] = {"in", "at", "near"};

bool sentence_start(std::string_view t, std::size_t pos) {
  std::size_t k = pos;
  while (k > 0) {
    const auto c = static_cast<unsigned char>(t[k - 1]);
    if (std::isspace(c) || c == '"' || c == '\'' || c == '(' || c == '[') {
      --k;
      continue;
    }
    if (k >= 3 && static_cast<unsigned char>(t[k - 3]) == 0xE2 && static_cast<unsigned char>(t[k - 2]) == 0x80 &&
        (static_cast<unsigned char>(t[k - 1]) == 0x9C || static_cast<unsigned char>(t[k - 1]) == 0x98)) {
      k -= 3;
      continue;
    }
    return c == '.' || c == '!' || c == '?';
  }
  return true;
}

}  // namespace

std::string_view to_string(RuleCategory c) {
  switch (c) {
    case RuleCategory::Pronoun: return "pronoun";
    case RuleCategory::Noun: return "noun";
    case RuleCategory::Agreement: return "agreement";
    case RuleCategory::Entity: return "entity";
  }
  return "unknown";
}

RuleCategory category_from_string(std::string_view s) {
  if (s == "pronoun") return RuleCategory::Pronoun;
  if (s == "noun") return RuleCategory::Noun;
  if (s == "agreement") return RuleCategory::Agreement;
  if (s == "entity") return RuleCategory::Entity;
  fail(ErrorCode::Parse, "unknown rule category '" + std::string(s) + "'");
}

void RuleTables::add_rule(RewriteRule rule) {
  if (rule.pattern.empty() || rule.pattern.front().empty())
    fail(ErrorCode::InvalidArgument, "rewrite rule with empty pattern");
  switch (rule.category) {
    case RuleCategory::Pronoun: {
      const auto key = rule.pattern.front();
      pronouns_[key] = std::move(rule);
      break;
    }
    case RuleCategory::Agreement: {
      const auto key = rule.pattern.front();
      agreement_[key] = std::move(rule);
      break;
    }
    case RuleCategory::Noun: {
      auto& bucket = nouns_[rule.pattern.front()];
      bucket.push_back(std::move(rule));
      std::stable_sort(bucket.begin(), bucket.end(), [](const RewriteRule& a, const RewriteRule& b) {
        return a.pattern.size() > b.pattern.size();
      });
      break;
    }
    case RuleCategory::Entity:
      fail(ErrorCode::InvalidArgument, "entity rules are produced by anonymize(), not loaded");
  }
}

const RewriteRule* RuleTables::pronoun(const std::string& key) const {
  const auto it = pronouns_.find(key);
  return it == pronouns_.end() ? nullptr : &it->second;
}

const RewriteRule* RuleTables::agreement(const std::string& key) const {
  const auto it = agreement_.find(key);
  return it == agreement_.end() ? nullptr : &it->second;
}

std::span<const RewriteRule> RuleTables::nouns_starting_with(const std::string& key) const {
  const auto it = nouns_.find(key);
  if (it == nouns_.end()) return {};
  return it->second;
}

std::vector<std::string> RuleTables::noun_keys() const {
  std::vector<std::string> keys;
  for (const auto& [first, rules] : nouns_)
    for (const auto& r : rules)
      if (r.pattern.size() == 1) keys.push_back(first);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

RuleTables RuleTables::load(const std::filesystem::path& data_dir) {
  RuleTables tables;
  const auto rules_dir = data_dir / "rules";
  for (const char* name : {"pronouns.tsv", "nouns.tsv", "agreement.tsv"}) {
    const auto path = rules_dir / name;
    std::size_t row = 0;
    for (const auto& line : io::read_data_lines(path)) {
      ++row;
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string col;
      while (std::getline(ss, col, '\t')) cols.push_back(col);
      if (cols.size() != 3)
        fail(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + ": expected 3 columns");
      RewriteRule rule;
      std::string lowered;
      for (char c : cols[0]) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      std::stringstream ps(lowered);
      for (std::string tok; ps >> tok;) rule.pattern.push_back(tok);
      rule.replacement = cols[1];
      rule.category = category_from_string(cols[2]);
      tables.add_rule(std::move(rule));
    }
  }
  for (auto& w : io::read_data_lines(rules_dir / "her_object_next.txt")) tables.add_her_object_follower(w);
  for (auto& w : io::read_data_lines(rules_dir / "common_capitalized.txt")) {
    std::string lowered;
    for (char c : w) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tables.add_common_capitalized(lowered);
  }
  for (auto& w : io::read_data_lines(rules_dir / "non_person_markers.txt")) {
    std::string lowered;
    for (char c : w) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tables.add_non_person_marker(lowered);
  }
  return tables;
}

NeutralizedText neutralize(std::string_view text, const RuleTables& rules) {
  const auto words = scan_words(text);
  std::vector<AppliedRule> edits;

  const auto emit = [&](const RewriteRule& rule, std::size_t from, std::size_t to, std::string replacement) {
    AppliedRule a;
    a.pattern = join(rule.pattern);
    a.category = rule.category;
    a.position = from;
    a.length = to - from;
    a.replacement = with_case_of(text.substr(from, to - from), std::move(replacement));
    edits.push_back(std::move(a));
  };

  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];

    if (const auto* rule = rules.pronoun(w.key)) {
      std::string replacement = rule->replacement;
      if (const auto bar = replacement.find('|'); bar != std::string::npos) {
        // Possessive unless the next token ends the clause or is a verb.
        bool object = true;
        if (i + 1 < words.size() && all_space(text, w.end, words[i + 1].start)) {
          const auto& next = words[i + 1].key;
          object = rules.agreement(next) != nullptr || rules.her_object_follower(next);
        }
        replacement = object ? replacement.substr(bar + 1) : replacement.substr(0, bar);
      }
      if (replacement == "they're" && i + 1 < words.size() && all_space(text, w.end, words[i + 1].start) &&
          std::find(std::begin(kHaveAuxNext), std::end(kHaveAuxNext), words[i + 1].key) != std::end(kHaveAuxNext))
        replacement = "they've";
      const bool subject = replacement == "they";
      emit(*rule, w.start, w.end, replacement);
      if (subject && i + 1 < words.size() && all_space(text, w.end, words[i + 1].start)) {
        const auto& next = words[i + 1];
        if (const auto* verb = rules.agreement(next.key)) {
          emit(*verb, next.start, next.end, verb->replacement);
          ++i;
        }
      }
      continue;
    }

    if (rules.nouns_starting_with(w.key).empty()) {
      // Possessive of a single-token noun: rewrite the stem, keep the 's.
      const auto stem = base_key(w.key);
      if (stem.size() != w.key.size()) {
        for (const auto& rule : rules.nouns_starting_with(std::string(stem))) {
          if (rule.pattern.size() != 1) continue;
          emit(rule, w.start, w.start + stem.size(), rule.replacement);
          break;
        }
        continue;
      }
    }

    for (const auto& rule : rules.nouns_starting_with(w.key)) {
      const auto len = rule.pattern.size();
      if (i + len > words.size()) continue;
      bool match = true;
      for (std::size_t k = 1; k < len && match; ++k)
        match = words[i + k].key == rule.pattern[k] && all_space(text, words[i + k - 1].end, words[i + k].start);
      if (!match) continue;
      emit(rule, w.start, words[i + len - 1].end, rule.replacement);
      i += len - 1;
      break;
    }
  }

  NeutralizedText out;
  out.text = replay_trace(text, edits);
  out.applied = std::move(edits);
  return out;
}

std::vector<EntitySpan> detect_person_spans(std::string_view text, const RuleTables& rules) {
  const auto words = scan_words(text);
  std::vector<EntitySpan> spans;
  const auto candidate = [&](const Word& w) {
    return is_capitalized(text, w) && !rules.common_capitalized(std::string(base_key(w.key)));
  };

  std::size_t i = 0;
  while (i < words.size()) {
    if (!candidate(words[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (base_key(words[j].key).size() == words[j].key.size() && j + 1 < words.size() &&
           all_space(text, words[j].end, words[j + 1].start) && candidate(words[j + 1]))
      ++j;

    bool keep = !(sentence_start(text, words[i].start) && j == i);
    if (keep && i > 0 && all_space(text, words[i - 1].end, words[i].start)) {
      const auto& prev = words[i - 1].key;
      if (j == i && std::find(std::begin(kLocativeBefore), std::end(kLocativeBefore), prev) != std::end(kLocativeBefore))
        keep = false;
      // "University of X", "Bank of X": the tail belongs to the organisation.
      if (prev == "of" && i > 1 && is_capitalized(text, words[i - 2]) &&
          rules.non_person_marker(std::string(base_key(words[i - 2].key))))
        keep = false;
    }
    for (auto k = i; k <= j && keep; ++k)
      keep = !rules.non_person_marker(std::string(base_key(words[k].key)));
    if (keep) {
      auto end = words[j].end;
      if (base_key(words[j].key).size() != words[j].key.size()) {
        // Drop the possessive suffix, which is 2 bytes for ' and 4 for ’.
        end -= text.substr(words[j].start, end - words[j].start).ends_with("'s") ? 2 : 4;
      }
      spans.push_back({words[i].start, end});
    }
    i = j + 1;
  }
  return spans;
}

NeutralizedText anonymize(std::string_view text, const RuleTables& rules,
                          std::optional<std::span<const EntitySpan>> annotations) {
  std::vector<EntitySpan> spans;
  if (annotations) {
    spans.assign(annotations->begin(), annotations->end());
    std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t k = 0; k < spans.size(); ++k) {
      if (spans[k].start >= spans[k].end || spans[k].end > text.size())
        fail(ErrorCode::InvalidArgument, "entity span [" + std::to_string(spans[k].start) + ", " +
                                             std::to_string(spans[k].end) + ") is out of bounds");
      if (k > 0 && spans[k].start < spans[k - 1].end)
        fail(ErrorCode::InvalidArgument, "overlapping entity spans at byte " + std::to_string(spans[k].start));
    }
  } else {
    spans = detect_person_spans(text, rules);
  }

  NeutralizedText out;
  for (const auto& s : spans) {
    AppliedRule a;
    a.pattern = std::string(text.substr(s.start, s.end - s.start));
    a.replacement = "<PER>";
    a.category = RuleCategory::Entity;
    a.position = s.start;
    a.length = s.end - s.start;
    out.applied.push_back(std::move(a));
  }
  out.entities_masked = spans.size();
  out.text = replay_trace(text, out.applied);
  return out;
}

std::string replay_trace(std::string_view original, std::span<const AppliedRule> applied) {
  std::vector<const AppliedRule*> order;
  for (const auto& a : applied) order.push_back(&a);
  std::stable_sort(order.begin(), order.end(),
                   [](const AppliedRule* a, const AppliedRule* b) { return a->position < b->position; });
  std::string out;
  std::size_t cursor = 0;
  for (const auto* a : order) {
    if (a->position < cursor || a->position + a->length > original.size())
      fail(ErrorCode::InvalidArgument, "trace entries overlap or exceed the input");
    out.append(original.substr(cursor, a->position - cursor));
    out += a->replacement;
    cursor = a->position + a->length;
  }
  out.append(original.substr(cursor));
  return out;
}

std::vector<std::string> residual_gendered_tokens(std::string_view text, const RuleTables& rules) {
  std::unordered_set<std::string> banned;
  for (auto p : kGenderedPronouns) banned.emplace(p);
  for (auto& k : rules.noun_keys()) banned.insert(k);
  std::vector<std::string> found;
  for (const auto& w : scan_words(text)) {
    const auto apos = w.key.find('\'');
    if (banned.contains(w.key) || (apos != std::string::npos && banned.contains(w.key.substr(0, apos))))
      found.push_back(w.key);
  }
  return found;
}

std::map<std::string, std::vector<EntitySpan>> load_annotations(const std::filesystem::path& path) {
  std::map<std::string, std::vector<EntitySpan>> out;
  std::size_t row = 0;
  for (const auto& line : io::read_data_lines(path)) {
    ++row;
    std::stringstream ss(line);
    std::string id, start, end;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, start, '\t') || !std::getline(ss, end, '\t'))
      fail(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + ": expected id, start, end");
    try {
      out[id].push_back({std::stoull(start), std::stoull(end)});
    } catch (const std::exception&) {
      fail(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + ": bad offset");
    }
  }
  return out;
}

}  // namespace biasaudit::neutralizer
