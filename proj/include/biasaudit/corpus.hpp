#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit::corpus {

struct Biography {
  std::string id;
  std::string text;
  std::size_t sentence_count = 0;
};

struct CorpusConfig {
  int min_sentences = 4;
  int max_sentences = 9;
  std::size_t sample_size = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Naive sentence splitter: a sentence ends at '.', '!' or '?' when followed
/// by whitespace and an uppercase ASCII letter, or at end of text.
/// Abbreviations are not special-cased.
std::vector<std::string> split_sentences(std::string_view text);

/// Reads line-delimited {"id", "text"} records. Input order is preserved.
/// Errors name the offending line (malformed record, duplicate id).
std::vector<Biography> load_corpus(const std::filesystem::path& path);

/// Keeps bios whose sentence count is within [min, max], then selects
/// min(sample_size, eligible) of them by sorting ids and running a seeded
/// Fisher-Yates shuffle (Lcg64). The result is in selection order.
std::vector<Biography> filter_and_sample(std::span<const Biography> bios, const CorpusConfig& cfg);

}  // namespace biasaudit::corpus
