#include "biasaudit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit::analysis {

Tokenizer::Tokenizer(std::unordered_set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}

Tokenizer Tokenizer::load(const std::filesystem::path& data_dir) {
  std::unordered_set<std::string> words;
  for (const auto& line : io::read_data_lines(data_dir / "stopwords.txt")) {
    std::istringstream ss(line);
    for (std::string w; ss >> w;) words.insert(w);
  }
  return Tokenizer(std::move(words));
}

std::vector<std::string> Tokenizer::operator()(std::string_view text) const {
  std::vector<std::string> out;
  for (auto& tok : text::split_lower_alnum(text)) {
    if (tok.size() < 2 || tok == "per" || stopwords_.contains(tok)) continue;
    out.push_back(std::move(tok));
  }
  return out;
}

void FrequencyTable::add(const std::string& label, const std::string& word, std::size_t count) {
  counts_[label][word] += count;
}

std::size_t FrequencyTable::count(const std::string& label, const std::string& word) const {
  const auto l = counts_.find(label);
  if (l == counts_.end()) return 0;
  const auto w = l->second.find(word);
  return w == l->second.end() ? 0 : w->second;
}

std::vector<std::pair<std::string, std::size_t>> FrequencyTable::top_n(const std::string& label,
                                                                      std::size_t n) const {
  std::vector<std::pair<std::string, std::size_t>> out;
  const auto l = counts_.find(label);
  if (l == counts_.end()) return out;
  out.assign(l->second.begin(), l->second.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > n) out.resize(n);
  return out;
}

FrequencyTable frequencies(std::span<const TokenizedDoc> docs) {
  FrequencyTable table;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) table.add(d.label, t);
  return table;
}

std::vector<PmiEntry> pmi(std::span<const TokenizedDoc> docs, std::size_t min_count, double alpha) {
  std::map<std::string, std::map<std::string, std::size_t>> joint;  // label -> word -> count
  std::map<std::string, std::size_t> word_total;
  std::map<std::string, std::size_t> label_total;
  for (const auto& d : docs) {
    label_total[d.label];
    for (const auto& t : d.tokens) {
      ++joint[d.label][t];
      ++word_total[t];
      ++label_total[d.label];
    }
  }
  if (label_total.size() < 2) fail(ErrorCode::InvalidArgument, "PMI needs at least two labels");

  const double V = static_cast<double>(word_total.size());
  const double L = static_cast<double>(label_total.size());
  double T = 0.0;
  for (const auto& [label, c] : label_total) T += static_cast<double>(c);

  std::vector<PmiEntry> out;
  for (const auto& [label, cl] : label_total) {
    const auto first = out.size();
    const auto& row = joint[label];
    for (const auto& [word, cw] : word_total) {
      if (cw < min_count) continue;
      const auto it = row.find(word);
      const double cwl = it == row.end() ? 0.0 : static_cast<double>(it->second);
      const double num = (cwl + alpha) * (T + alpha * V * L);
      const double den = (static_cast<double>(cw) + alpha * L) * (static_cast<double>(cl) + alpha * V);
      out.push_back({word, label, std::log2(num / den)});
    }
    std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                     [](const PmiEntry& a, const PmiEntry& b) { return a.pmi_bits > b.pmi_bits; });
  }
  return out;
}

double TfidfMatrix::dot(std::size_t a, std::size_t b) const {
  const auto& ra = rows[a];
  const auto& rb = rows[b];
  double sum = 0.0;
  std::size_t i = 0, j = 0;
  while (i < ra.size() && j < rb.size()) {
    if (ra[i].first == rb[j].first) {
      sum += ra[i++].second * rb[j++].second;
    } else if (ra[i].first < rb[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return sum;
}

std::vector<double> TfidfMatrix::dense_row(std::size_t r) const {
  std::vector<double> out(vocabulary.size(), 0.0);
  for (const auto& [c, w] : rows[r]) out[c] = w;
  return out;
}

TfidfMatrix tfidf(std::span<const KeyedDoc> docs) {
  if (docs.empty()) fail(ErrorCode::InvalidArgument, "TF-IDF needs at least one document");
  TfidfMatrix m;

  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    std::vector<std::string> uniq = d.tokens;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& t : uniq) ++df[t];
  }
  std::unordered_map<std::string, std::size_t> column;
  std::vector<double> idf;
  const double N = static_cast<double>(docs.size());
  for (const auto& [word, count] : df) {
    column.emplace(word, m.vocabulary.size());
    m.vocabulary.push_back(word);
    idf.push_back(std::log((1.0 + N) / (1.0 + static_cast<double>(count))) + 1.0);
  }

  for (const auto& d : docs) {
    std::map<std::size_t, double> tf;
    for (const auto& t : d.tokens) tf[column.at(t)] += 1.0;
    SparseRow row;
    double norm2 = 0.0;
    for (const auto& [c, count] : tf) {
      const double w = count * idf[c];
      row.emplace_back(c, w);
      norm2 += w * w;
    }
    const bool zero = norm2 == 0.0;
    if (!zero) {
      const double norm = std::sqrt(norm2);
      for (auto& [c, w] : row) w /= norm;
    }
    m.rows.push_back(std::move(row));
    m.doc_keys.push_back(d.key);
    m.zero_row.push_back(zero);
  }
  return m;
}

double pair_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const KeyedDoc docs[] = {{{"a", ""}, a}, {{"b", ""}, b}};
  const auto m = tfidf(docs);
  return m.dot(0, 1);
}

std::vector<SimilarityStat> mean_group_cosine(const TfidfMatrix& m, std::string_view control_label) {
  std::map<std::string, std::size_t> control_row;
  std::vector<std::string> identities;
  for (std::size_t r = 0; r < m.doc_keys.size(); ++r) {
    const auto& k = m.doc_keys[r];
    if (k.identity == control_label) {
      control_row.emplace(k.bio_id, r);
    } else if (std::find(identities.begin(), identities.end(), k.identity) == identities.end()) {
      identities.push_back(k.identity);
    }
  }

  std::vector<SimilarityStat> out;
  for (const auto& id : identities) {
    SimilarityStat stat;
    stat.identity = id;
    double sum = 0.0;
    for (std::size_t r = 0; r < m.doc_keys.size(); ++r) {
      if (m.doc_keys[r].identity != id) continue;
      const auto c = control_row.find(m.doc_keys[r].bio_id);
      if (c == control_row.end()) {
        ++stat.skipped;
        continue;
      }
      sum += m.dot(r, c->second);
      ++stat.n;
    }
    if (stat.n == 0) fail(ErrorCode::InvalidArgument, "no bios with both control and " + id + " outputs");
    stat.mean_cosine = sum / static_cast<double>(stat.n);
    out.push_back(stat);
  }
  return out;
}

}  // namespace biasaudit::analysis
