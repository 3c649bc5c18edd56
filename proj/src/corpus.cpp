#include "biasaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "biasaudit/error.hpp"
#include "biasaudit/rng.hpp"

namespace biasaudit::corpus {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

void CorpusConfig::validate() const {
  if (min_sentences < 1 || min_sentences > max_sentences)
    fail(ErrorCode::InvalidArgument, "corpus config requires 1 <= min_sentences <= max_sentences");
  if (sample_size < 1) fail(ErrorCode::InvalidArgument, "corpus config requires sample_size >= 1");
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    if (j < text.size() && !is_space(text[j])) continue;
    while (j < text.size() && is_space(text[j])) ++j;
    if (j == text.size() || is_upper(text[j])) {
      auto s = trim(text.substr(start, i + 1 - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = j;
      i = j == 0 ? 0 : j - 1;
    }
  }
  if (start < text.size()) {
    auto s = trim(text.substr(start));
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

std::vector<Biography> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "corpus file not found: " + path.string());

  std::vector<Biography> bios;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = path.string() + ": line " + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      fail(ErrorCode::Parse, where + ": malformed record");
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") || !rec["id"].is_string() ||
        !rec["text"].is_string())
      fail(ErrorCode::Parse, where + ": record needs string fields id and text");
    Biography bio;
    bio.id = rec["id"].get<std::string>();
    bio.text = rec["text"].get<std::string>();
    if (bio.id.empty()) fail(ErrorCode::Parse, where + ": empty id");
    if (!seen.insert(bio.id).second) fail(ErrorCode::Parse, where + ": duplicate id '" + bio.id + "'");
    bio.sentence_count = split_sentences(bio.text).size();
    bios.push_back(std::move(bio));
  }
  return bios;
}

std::vector<Biography> filter_and_sample(std::span<const Biography> bios, const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<Biography> eligible;
  for (const auto& b : bios) {
    const auto n = b.sentence_count;
    if (n >= static_cast<std::size_t>(cfg.min_sentences) && n <= static_cast<std::size_t>(cfg.max_sentences))
      eligible.push_back(b);
  }
  if (eligible.empty())
    fail(ErrorCode::InvalidArgument, "no biographies with " + std::to_string(cfg.min_sentences) + ".." +
                                         std::to_string(cfg.max_sentences) + " sentences");

  std::sort(eligible.begin(), eligible.end(),
            [](const Biography& a, const Biography& b) { return a.id < b.id; });
  Lcg64 rng(cfg.seed);
  for (std::size_t i = eligible.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(std::min(cfg.sample_size, eligible.size()));
  return eligible;
}

}  // namespace biasaudit::corpus
