#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace biasaudit::neutralizer {

enum class RuleCategory { Pronoun, Noun, Agreement, Entity };

std::string_view to_string(RuleCategory c);
RuleCategory category_from_string(std::string_view s);

/// One row of a rule table. `pattern` holds lowercase tokens; a replacement
/// of the form "their|them" marks the possessive/object ambiguity of "her".
struct RewriteRule {
  std::vector<std::string> pattern;
  std::string replacement;
  RuleCategory category = RuleCategory::Noun;
};

/// Immutable lookup tables shared by neutralize() and anonymize().
class RuleTables {
public:
  /// Loads rules/{pronouns,nouns,agreement}.tsv, rules/her_object_next.txt,
  /// rules/common_capitalized.txt and rules/non_person_markers.txt.
  static RuleTables load(const std::filesystem::path& data_dir);

  void add_rule(RewriteRule rule);
  void add_her_object_follower(std::string word) { her_object_next_.insert(std::move(word)); }
  void add_common_capitalized(std::string word) { common_capitalized_.insert(std::move(word)); }
  void add_non_person_marker(std::string word) { non_person_markers_.insert(std::move(word)); }

  const RewriteRule* pronoun(const std::string& key) const;
  const RewriteRule* agreement(const std::string& key) const;
  /// Noun rules whose first pattern token is `key`, longest pattern first.
  std::span<const RewriteRule> nouns_starting_with(const std::string& key) const;

  bool her_object_follower(const std::string& key) const { return her_object_next_.contains(key); }
  bool common_capitalized(const std::string& key) const { return common_capitalized_.contains(key); }
  bool non_person_marker(const std::string& key) const { return non_person_markers_.contains(key); }

  /// Every single-token noun key, for completeness scans.
  std::vector<std::string> noun_keys() const;

private:
  std::unordered_map<std::string, RewriteRule> pronouns_;
  std::unordered_map<std::string, RewriteRule> agreement_;
  std::unordered_map<std::string, std::vector<RewriteRule>> nouns_;
  std::unordered_set<std::string> her_object_next_;
  std::unordered_set<std::string> common_capitalized_;
  std::unordered_set<std::string> non_person_markers_;
};

/// A substitution applied to the input: the byte range [position,
/// position + length) of the input was replaced by `replacement`.
struct AppliedRule {
  std::string pattern;
  std::string replacement;
  RuleCategory category = RuleCategory::Noun;
  std::size_t position = 0;
  std::size_t length = 0;
};

struct NeutralizedText {
  std::string text;
  std::vector<AppliedRule> applied;
  std::size_t entities_masked = 0;
};

/// Half-open byte range [start, end) naming a person mention.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
};

/// The pronouns that must never survive neutralization.
inline constexpr std::string_view kGenderedPronouns[] = {"he",  "she",  "him",     "his",
                                                         "her", "hers", "himself", "herself"};

NeutralizedText neutralize(std::string_view text, const RuleTables& rules);

/// Replaces person mentions with the literal "<PER>". With annotations, the
/// given spans are used verbatim (they must be in bounds and disjoint);
/// without, detect_person_spans() supplies them.
NeutralizedText anonymize(std::string_view text, const RuleTables& rules,
                          std::optional<std::span<const EntitySpan>> annotations = std::nullopt);

/// Capitalized-token runs that look like names. A run may not start at a
/// sentence boundary unless it spans two or more tokens; tokens from the
/// common-capitalized list break runs, and a run containing a non-person
/// marker (University, Corporation, ...) is discarded, as is the "of X" tail
/// of such a marker and a lone token right after "in", "at" or "near".
std::vector<EntitySpan> detect_person_spans(std::string_view text, const RuleTables& rules);

/// Rebuilds the rewritten text from the original input and its trace.
std::string replay_trace(std::string_view original, std::span<const AppliedRule> applied);

/// Gendered pronouns and noun-table keys still present as whole tokens.
std::vector<std::string> residual_gendered_tokens(std::string_view text, const RuleTables& rules);

/// Annotation file: tab-separated (record id, start byte, end byte) per line.
std::map<std::string, std::vector<EntitySpan>> load_annotations(const std::filesystem::path& path);

}  // namespace biasaudit::neutralizer
