#include "biasaudit/regard.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit::regard {

void RegardResult::validate() const {
  for (double p : {p_negative, p_neutral, p_positive, p_other})
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::Backend, "regard probability outside [0,1]");
  const double sum = p_negative + p_neutral + p_positive + p_other;
  if (std::abs(sum - 1.0) > 1e-6) fail(ErrorCode::Backend, "regard probabilities do not sum to 1");
}

RegardResult Scorer::score(std::string_view text) const {
  const std::string owned(text);
  return score_batch(std::span<const std::string>(&owned, 1)).front();
}

LexiconScorer::LexiconScorer(std::unordered_set<std::string> positive, std::unordered_set<std::string> negative)
    : positive_(std::move(positive)), negative_(std::move(negative)) {}

std::shared_ptr<LexiconScorer> LexiconScorer::load(const std::filesystem::path& data_dir) {
  const auto read = [&](const char* name) {
    std::unordered_set<std::string> words;
    for (const auto& line : io::read_data_lines(data_dir / "lexicon" / name))
      for (auto& w : text::split_lower_alnum(line)) words.insert(std::move(w));
    return words;
  };
  return std::make_shared<LexiconScorer>(read("positive.txt"), read("negative.txt"));
}

RegardResult LexiconScorer::score_counts(std::size_t positive, std::size_t negative) const {
  const double pos = static_cast<double>(positive);
  const double neg = static_cast<double>(negative);
  const double raw = (pos - neg) / std::max(1.0, pos + neg);
  RegardResult r;
  r.p_positive = std::max(raw, 0.0);
  r.p_negative = std::max(-raw, 0.0);
  r.p_neutral = 1.0 - std::abs(raw);
  r.p_other = 0.0;
  return r;
}

std::vector<RegardResult> LexiconScorer::score_batch(std::span<const std::string> texts) const {
  std::vector<RegardResult> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::size_t pos = 0, neg = 0;
    for (const auto& tok : text::split_lower_alnum(t)) {
      if (positive_.contains(tok)) ++pos;
      if (negative_.contains(tok)) ++neg;
    }
    out.push_back(score_counts(pos, neg));
  }
  return out;
}

std::string LexiconScorer::describe() const {
  return "lexicon(" + std::to_string(positive_.size()) + " positive, " + std::to_string(negative_.size()) +
         " negative)";
}

HttpScorer::HttpScorer(std::string endpoint, std::shared_ptr<http::Transport> transport)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)) {
  if (endpoint_.empty()) fail(ErrorCode::InvalidArgument, "regard endpoint is empty");
  if (!transport_) transport_ = http::make_http_transport();
}

void HttpScorer::check_health() const {
  const auto res = transport_->get(http::join_url(endpoint_, "/healthz"));
  if (res.status != 200)
    fail(ErrorCode::Backend, "regard service not healthy at " + endpoint_ + ": " +
                                 (res.status == 0 ? res.error : "HTTP " + std::to_string(res.status)));
}

std::vector<RegardResult> HttpScorer::score_batch(std::span<const std::string> texts) const {
  std::vector<RegardResult> out;
  out.reserve(texts.size());
  const auto url = http::join_url(endpoint_, "/v1/regard");
  for (std::size_t start = 0; start < texts.size(); start += kMaxBatch) {
    const auto chunk = texts.subspan(start, std::min(kMaxBatch, texts.size() - start));
    const nlohmann::json body = {{"texts", std::vector<std::string>(chunk.begin(), chunk.end())}};
    const auto res = transport_->post(url, {}, body.dump());
    if (res.status != 200)
      fail(ErrorCode::Backend, "regard request failed: " +
                                   (res.status == 0 ? res.error : "HTTP " + std::to_string(res.status)));
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::Backend, std::string("regard response is not JSON: ") + e.what());
    }
    if (!parsed.contains("results") || !parsed["results"].is_array() || parsed["results"].size() != chunk.size())
      fail(ErrorCode::Backend, "regard response must carry one result per text");
    for (const auto& rec : parsed["results"]) {
      RegardResult r;
      try {
        r.p_negative = rec.at("negative").get<double>();
        r.p_neutral = rec.at("neutral").get<double>();
        r.p_positive = rec.at("positive").get<double>();
        r.p_other = rec.value("other", 0.0);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Backend, std::string("malformed regard result: ") + e.what());
      }
      r.validate();
      out.push_back(r);
    }
  }
  return out;
}

std::string HttpScorer::describe() const { return "http(" + endpoint_ + ")"; }

double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::vector<RegardDiffRow> group_diff(std::span<const LabeledRegard> records) {
  std::map<promptgen::Identity, std::vector<double>> by_identity;
  for (const auto& [id, r] : records) by_identity[id].push_back(r.scalar());
  const auto control = by_identity.find(promptgen::Identity::Control);
  if (control == by_identity.end()) fail(ErrorCode::InvalidArgument, "regard diff needs control records");
  const double control_mean = stable_mean(control->second);

  std::vector<RegardDiffRow> rows;
  for (auto id : promptgen::kAllIdentities) {
    const auto it = by_identity.find(id);
    if (it == by_identity.end()) continue;
    RegardDiffRow row;
    row.identity = id;
    row.n = it->second.size();
    row.mean_scalar = stable_mean(it->second);
    row.diff_vs_control = id == promptgen::Identity::Control ? 0.0 : control_mean - row.mean_scalar;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace biasaudit::regard
