#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace biasaudit::analysis {

/// Lowercases, splits on non-alphanumerics, then drops tokens shorter than
/// two bytes, stopwords, and the "per" left behind by "<PER>".
class Tokenizer {
public:
  explicit Tokenizer(std::unordered_set<std::string> stopwords);
  /// Reads whitespace-separated words from stopwords.txt.
  static Tokenizer load(const std::filesystem::path& data_dir);

  std::vector<std::string> operator()(std::string_view text) const;

private:
  std::unordered_set<std::string> stopwords_;
};

struct TokenizedDoc {
  std::string label;
  std::vector<std::string> tokens;
};

class FrequencyTable {
public:
  void add(const std::string& label, const std::string& word, std::size_t count = 1);
  std::size_t count(const std::string& label, const std::string& word) const;
  /// Highest counts first; equal counts in ascending word order.
  std::vector<std::pair<std::string, std::size_t>> top_n(const std::string& label, std::size_t n) const;
  const std::map<std::string, std::map<std::string, std::size_t>>& labels() const { return counts_; }

private:
  std::map<std::string, std::map<std::string, std::size_t>> counts_;
};

FrequencyTable frequencies(std::span<const TokenizedDoc> docs);

struct PmiEntry {
  std::string word;
  std::string label;
  double pmi_bits = 0.0;
};

/// Additively smoothed word/label PMI in bits:
///   log2( (c(w,l)+a)(T+aVL) / ((c(w)+aL)(c(l)+aV)) )
/// with V the vocabulary size and L the label count. Emitted for every
/// (word, label) with c(w) >= min_count, grouped by label (ascending) and
/// sorted by PMI descending, then word ascending.
std::vector<PmiEntry> pmi(std::span<const TokenizedDoc> docs, std::size_t min_count = 5, double alpha = 1.0);

struct DocKey {
  std::string bio_id;
  std::string identity;
  auto operator<=>(const DocKey&) const = default;
};

struct KeyedDoc {
  DocKey key;
  std::vector<std::string> tokens;
};

/// Sparse row entry: (column, weight).
using SparseRow = std::vector<std::pair<std::size_t, double>>;

struct TfidfMatrix {
  std::vector<std::string> vocabulary;  // sorted
  std::vector<SparseRow> rows;          // L2-normalised, columns ascending
  std::vector<DocKey> doc_keys;
  std::vector<bool> zero_row;           // documents with no surviving tokens

  double dot(std::size_t a, std::size_t b) const;
  std::vector<double> dense_row(std::size_t r) const;
};

/// tf = raw count, idf = ln((1+N)/(1+df)) + 1, rows scaled to unit norm.
TfidfMatrix tfidf(std::span<const KeyedDoc> docs);

/// Cosine of two token lists under a TF-IDF model fitted on just the pair.
double pair_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct SimilarityStat {
  std::string identity;
  double mean_cosine = 0.0;
  std::size_t n = 0;
  std::size_t skipped = 0;
};

/// For every non-control identity, the mean over bios of the cosine between
/// the identity's row and the same bio's control row. Bios lacking either
/// row are skipped and counted. Identities keep first-appearance order.
std::vector<SimilarityStat> mean_group_cosine(const TfidfMatrix& m, std::string_view control_label = "control");

}  // namespace biasaudit::analysis
