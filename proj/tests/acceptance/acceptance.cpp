// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "biasaudit/analysis.hpp"
#include "biasaudit/attribution.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/neutralizer.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/regard.hpp"
#include "biasaudit/tsne.hpp"
#include "e2e.hpp"
#include "oracles.hpp"
#include "shapley_fixtures.hpp"
#include "test_support.hpp"

using namespace biasaudit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-22s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
  return t;
}

std::size_t mask_of(const std::vector<bool>& c) {
  std::size_t m = 0;
  for (std::size_t i = 0; i < c.size(); ++i) m |= std::size_t{c[i]} << i;
  return m;
}

std::vector<double> phis(const std::vector<attribution::TokenAttribution>& a) {
  std::vector<double> out;
  for (const auto& x : a) out.push_back(x.phi);
  return out;
}

Outcome shapley_axioms() {
  const auto start = Clock::now();
  double worst_oracle = 0.0, worst_efficiency = 0.0, worst_symmetry = 0.0;

  // Random games whose value is invariant under swapping players 0 and 1.
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int g = 0; g < 25; ++g) {
    const std::size_t n = 2 + g % 9;
    std::vector<double> table(std::size_t{1} << n);
    for (std::size_t m = 0; m < table.size(); ++m) {
      const std::size_t swapped = (m & ~std::size_t{3}) | ((m & 1) << 1) | ((m >> 1) & 1);
      table[m] = swapped < m ? table[swapped] : u(gen);
    }
    const auto value = [&](const std::vector<bool>& c) { return table[mask_of(c)]; };
    const auto exact = phis(attribution::shapley_exact(names(n), attribution::ValueFunction(value)));
    const auto expected = oracle::shapley(static_cast<int>(n), value);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      worst_oracle = std::max(worst_oracle, std::abs(exact[i] - expected[i]));
      sum += exact[i];
    }
    worst_efficiency = std::max(worst_efficiency, std::abs(sum - (table.back() - table.front())));
    worst_symmetry = std::max(worst_symmetry, std::abs(exact[0] - exact[1]));
  }

  // Lexicon-scored sentences: tokens of the same lexicon class are interchangeable.
  const auto lex = regard::LexiconScorer::load(testing::data_dir());
  for (const char* sentence : fixture::shapley_sentences()) {
    const auto tokens = fixture::shapley_tokens(sentence);
    if (tokens.size() != 8) return {false, "fixture is not 8 tokens"};
    const auto f = attribution::negative_regard_value(tokens, *lex);
    const auto value = [&](const std::vector<bool>& c) { return f(std::vector<attribution::Coalition>{c}).front(); };
    const auto exact = phis(attribution::shapley_exact(tokens, f));
    const auto expected = oracle::shapley(8, value);
    double sum = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      worst_oracle = std::max(worst_oracle, std::abs(exact[i] - expected[i]));
      sum += exact[i];
    }
    worst_efficiency =
        std::max(worst_efficiency, std::abs(sum - (value(std::vector<bool>(8, true)) - value(std::vector<bool>(8)))));
    const auto cls = [&](const std::string& t) { return lex->score(t).scalar(); };
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = i + 1; j < 8; ++j)
        if (cls(tokens[i]) == cls(tokens[j])) worst_symmetry = std::max(worst_symmetry, std::abs(exact[i] - exact[j]));
  }
  const double secs = seconds_since(start);
  const bool pass = worst_oracle <= 1e-12 && worst_efficiency <= 1e-12 && worst_symmetry <= 1e-12 && secs < 10.0;
  return {pass, fmt("oracle %.1e, efficiency %.1e, symmetry %.1e", worst_oracle, worst_efficiency, worst_symmetry) +
                    " (tol 1e-12, <10s)"};
}

Outcome shapley_sampling() {
  const auto start = Clock::now();
  const auto lex = regard::LexiconScorer::load(testing::data_dir());
  double worst = 0.0, mae_small = 0.0, mae_large = 0.0;
  for (const char* sentence : fixture::shapley_sentences()) {
    const auto tokens = fixture::shapley_tokens(sentence);
    const auto f = attribution::negative_regard_value(tokens, *lex);
    const auto exact = phis(attribution::shapley_exact(tokens, f));
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto s2000 = phis(attribution::shapley_sampled(tokens, f, 2000, seed));
      const auto s250 = phis(attribution::shapley_sampled(tokens, f, 250, seed));
      const auto s4000 = phis(attribution::shapley_sampled(tokens, f, 4000, seed));
      for (std::size_t i = 0; i < exact.size(); ++i) {
        worst = std::max(worst, std::abs(s2000[i] - exact[i]));
        mae_small += std::abs(s250[i] - exact[i]);
        mae_large += std::abs(s4000[i] - exact[i]);
      }
    }
  }
  const double count = 5.0 * 10.0 * 8.0;
  mae_small /= count;
  mae_large /= count;
  const double secs = seconds_since(start);
  const bool pass = worst <= 0.05 && mae_large <= mae_small && secs < 30.0;
  return {pass, fmt("max |err| at m=2000 %.4f (tol 0.05); MAE m=4000 %.5f <= m=250 %.5f", worst, mae_large, mae_small)};
}

Outcome neutralizer_fixture() {
  const auto rules = neutralizer::RuleTables::load(testing::data_dir());
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& line : io::read_data_lines(testing::fixtures_dir() / "neutralizer" / "annotated.tsv")) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) return {false, "malformed fixture line"};
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  const auto start = Clock::now();
  int mismatched = 0, residual = 0, unstable = 0;
  for (const auto& [input, expected] : rows) {
    const auto out = neutralizer::neutralize(neutralizer::anonymize(input, rules).text, rules).text;
    mismatched += out != expected;
    residual += !neutralizer::residual_gendered_tokens(out, rules).empty();
    unstable += neutralizer::neutralize(out, rules).text != out;
  }
  const double secs = seconds_since(start);
  const bool pass = rows.size() == 40 && mismatched == 0 && residual == 0 && unstable == 0 && secs < 1.0;
  return {pass, std::to_string(rows.size()) + " sentences, " + std::to_string(mismatched) + " mismatched, " +
                    std::to_string(residual) + " with residual tokens, " + std::to_string(unstable) +
                    " not idempotent" + fmt(", %.3fs (<1s)", secs)};
}

Outcome pmi() {
  using analysis::TokenizedDoc;
  const std::vector<std::vector<TokenizedDoc>> corpora = {
      {{"A", {"x", "x", "y"}}, {"B", {"y", "y", "y"}}},
      {{"gay_man", {"pride", "artist", "partner", "pride", "activist"}},
       {"straight_man", {"artist", "wife", "career", "artist"}},
       {"control", {"artist", "career", "award", "partner"}},
       {"gay_man", {"activist", "award", "pride"}}},
      {{"p", {"a", "b", "c", "d", "e", "a", "b", "c"}},
       {"q", {"e", "e", "f", "g", "a"}},
       {"r", {"g", "g", "g", "h", "b", "c", "d", "h"}},
       {"q", {"h", "a", "b"}},
       {"p", {"f", "f", "c"}}},
  };
  double worst = 0.0;
  std::size_t entries = 0;
  for (const auto& docs : corpora) {
    std::size_t tokens = 0;
    for (const auto& d : docs) tokens += d.tokens.size();
    if (tokens > 50) return {false, "toy corpus too large"};
    for (double alpha : {1.0, 0.5}) {
      const auto expected = oracle::pmi(docs, alpha);
      const auto got = analysis::pmi(docs, 1, alpha);
      if (got.size() != expected.size()) return {false, "entry count differs from oracle"};
      for (const auto& e : got) worst = std::max(worst, std::abs(e.pmi_bits - expected.at({e.word, e.label})));
      entries += got.size();
    }
  }
  return {worst <= 1e-12, std::to_string(entries) + " entries over 3 corpora, max |diff| " + fmt("%.1e (tol 1e-12)", worst)};
}

Outcome tsne() {
  const auto start = Clock::now();
  std::mt19937_64 gen(77);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<double>> points;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 25; ++i) {
      std::vector<double> p(10);
      for (int d = 0; d < 10; ++d) p[d] = noise(gen) + (d == c ? 8.0 : 0.0);
      points.push_back(p);
    }
  analysis::TsneParams params;
  params.seed = 11;
  const auto a = analysis::tsne(points, params);
  const auto b = analysis::tsne(points, params);
  double drift = 0.0;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    for (int k = 0; k < 2; ++k) drift = std::max(drift, std::abs(a.points[i][k] - b.points[i][k]));
  const double first = a.checkpoints.front().kl;
  const double last = a.checkpoints.back().kl;
  const double secs = seconds_since(start);
  const bool pass = a.points.size() == 100 && last < first && drift <= 1e-12 && secs < 60.0;
  return {pass, fmt("KL %.4f -> %.4f, rerun drift %.1e", first, last, drift) + " (<60s)"};
}

/// Fails every request, so any network use in replay mode is an error.
class NoNetwork : public http::Transport {
public:
  http::Response post(const std::string&, const http::Headers&, const std::string&) override {
    ++calls;
    return {0, "", "network disabled"};
  }
  http::Response get(const std::string&) override {
    ++calls;
    return {0, "", "network disabled"};
  }
  std::atomic<int> calls{0};
};

std::map<std::string, std::vector<std::string>> csv_by_first_column(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> out;
  const auto rows = io::read_csv(path);
  for (std::size_t i = 1; i < rows.size(); ++i) out[rows[i].at(0)] = rows[i];
  return out;
}

Outcome end_to_end(const testing::TempDir& first) {
  const auto start = Clock::now();
  testing::TempDir second;
  auto net = std::make_shared<NoNetwork>();
  pipeline::Hooks hooks;
  hooks.llm_transport = net;
  hooks.regard_transport = net;
  for (const testing::TempDir* dir : std::array<const testing::TempDir*, 2>{&first, &second}) {
    const auto settings = fixture::replay_settings(dir->path());
    for (auto stage : fixture::kAllStages) pipeline::Pipeline(settings, hooks).run(stage);
  }
  const auto a = fixture::csv_files(first.path());
  const auto b = fixture::csv_files(second.path());
  const auto diff = csv_by_first_column(first / "analysis/regard_diff.csv");
  const double gm = std::stod(diff.at("gay_man").at(2)), sm = std::stod(diff.at("straight_man").at(2));
  const double lw = std::stod(diff.at("lesbian_woman").at(2)), sw = std::stod(diff.at("straight_woman").at(2));
  const double secs = seconds_since(start);
  const bool pass = net->calls == 0 && !a.empty() && a == b && gm > sm && lw > sw && secs < 120.0;
  return {pass, std::to_string(a.size()) + " CSVs " + (a == b ? "identical" : "DIFFER") + ", " +
                    std::to_string(net->calls.load()) + " network calls; " +
                    fmt("diff GM %.3f > SM %.3f, ", gm, sm) + fmt("LW %.3f > SW %.3f (<120s)", lw, sw)};
}

Outcome debias_gating(const testing::TempDir& run) {
  std::size_t accepted = 0, violations = 0, total = 0;
  for (const auto& rec : io::read_jsonl(run / "debias.jsonl")) {
    ++total;
    if (!rec.at("accepted").get<bool>()) continue;
    ++accepted;
    if (rec.at("gain").get<double>() < 0.05 || rec.at("similarity").get<double>() < 0.5) ++violations;
  }
  const auto summary = csv_by_first_column(run / "analysis/debias_summary.csv");
  bool ordered = !summary.empty();
  std::string detail;
  for (const char* id : {"gay_man", "lesbian_woman"}) {
    const auto it = summary.find(id);
    if (it == summary.end()) {
      ordered = false;
      continue;
    }
    const double orig = std::stod(it->second.at(1)), base = std::stod(it->second.at(2)), cot = std::stod(it->second.at(3));
    ordered = ordered && cot < base && base < orig;
    detail += std::string(id) + fmt(" %.3f>%.3f>%.3f; ", orig, base, cot);
  }
  const bool pass = total > 0 && accepted > 0 && violations == 0 && ordered;
  return {pass, std::to_string(accepted) + "/" + std::to_string(total) + " accepted, " + std::to_string(violations) +
                    " gate violations; original>baseline>cot: " + detail};
}

}  // namespace

int main() {
  report("shapley-axioms", shapley_axioms);
  report("shapley-sampling", shapley_sampling);
  report("neutralizer", neutralizer_fixture);
  report("pmi", pmi);
  report("tsne", tsne);
  testing::TempDir run;
  report("end-to-end-replay", [&] { return end_to_end(run); });
  report("debias-gating", [&] { return debias_gating(run); });
  std::printf("%s\n", failures == 0 ? "ALL PASS" : (std::to_string(failures) + " FAILED").c_str());
  return failures == 0 ? 0 : 1;
}
