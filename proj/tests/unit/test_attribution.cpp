#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

#include "biasaudit/attribution.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/regard.hpp"
#include "oracles.hpp"
#include "shapley_fixtures.hpp"
#include "test_support.hpp"

using namespace biasaudit;
using namespace biasaudit::attribution;

namespace {

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
  return t;
}

std::vector<TokenAttribution> with_phi(std::initializer_list<std::pair<const char*, double>> list) {
  std::vector<TokenAttribution> out;
  for (const auto& [tok, phi] : list) out.push_back({tok, out.size(), phi});
  return out;
}

}  // namespace

TEST_CASE("exact Shapley on an additive game returns the weights") {
  const std::vector<double> w = {0.3, -0.1, 0.5};
  const ValueFunction f = [&](const Coalition& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] ? w[i] : 0.0;
    return s;
  };
  const auto tokens = names(3);
  const auto phi = shapley_exact(tokens, f);
  REQUIRE(phi.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(phi[i].phi - w[i]) < 1e-12);
    CHECK(phi[i].index == i);
    CHECK(phi[i].token == tokens[i]);
  }
}

TEST_CASE("symmetry and dummy axioms") {
  // Tokens 0 and 1 are interchangeable; token 2 never matters.
  const ValueFunction f = [](const Coalition& c) { return (c[0] || c[1]) ? 0.6 + 0.2 * c[3] : 0.1 * c[3]; };
  const auto tokens = names(4);
  const auto exact = shapley_exact(tokens, f);
  CHECK(std::abs(exact[0].phi - exact[1].phi) < 1e-12);
  CHECK(exact[2].phi == 0.0);
  const auto sampled = shapley_sampled(tokens, f, 300, 17);
  CHECK(sampled[2].phi == 0.0);
}

TEST_CASE("exact Shapley matches brute force on random games") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 2 + trial % 6;
    std::vector<double> table(std::size_t{1} << n);
    for (auto& v : table) v = u(gen);
    const auto value = [&](const std::vector<bool>& c) {
      std::size_t mask = 0;
      for (std::size_t i = 0; i < c.size(); ++i) mask |= std::size_t{c[i]} << i;
      return table[mask];
    };
    const auto expected = oracle::shapley(static_cast<int>(n), value);
    const auto got = shapley_exact(names(n), ValueFunction(value));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(got[i].phi - expected[i]) < 1e-12);
      sum += got[i].phi;
    }
    CHECK(std::abs(sum - (table.back() - table.front())) < 1e-12);
  }
}

TEST_CASE("exact Shapley evaluates each coalition once") {
  std::atomic<int> calls{0};
  const BatchValueFunction f = [&](std::span<const Coalition> cs) {
    calls += static_cast<int>(cs.size());
    return std::vector<double>(cs.size(), 0.0);
  };
  shapley_exact(names(6), f);
  CHECK(calls == 64);
  CHECK_THROWS_AS(shapley_exact(names(21), f), Error);
  CHECK_NOTHROW(shapley_exact(names(3), f, 3));
}

TEST_CASE("lexicon fixtures against the 256-coalition oracle") {
  const auto lex = regard::LexiconScorer::load(testing::data_dir());
  for (const char* sentence : fixture::shapley_sentences()) {
    const auto tokens = fixture::shapley_tokens(sentence);
    REQUIRE(tokens.size() == 8);
    const auto value = [&](const std::vector<bool>& c) {
      std::string s;
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (c[i]) s += (s.empty() ? "" : " ") + tokens[i];
      return lex->score(s).p_negative;
    };
    const auto expected = oracle::shapley(8, value);
    const auto got = shapley_exact(tokens, negative_regard_value(tokens, *lex));
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(got[i].phi - expected[i]) < 1e-12);
  }
}

TEST_CASE("sampled Shapley") {
  const auto lex = regard::LexiconScorer::load(testing::data_dir());
  const auto tokens = fixture::shapley_tokens(fixture::shapley_sentences()[0]);
  const auto f = negative_regard_value(tokens, *lex);
  const auto a = shapley_sampled(tokens, f, 500, 3);
  const auto b = shapley_sampled(tokens, f, 500, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].phi == b[i].phi);

  const auto exact = shapley_exact(tokens, f);
  const auto close = shapley_sampled(tokens, f, 2000, 8);
  for (std::size_t i = 0; i < exact.size(); ++i) CHECK(std::abs(close[i].phi - exact[i].phi) <= 0.05);

  AttributionParams bad;
  bad.samples = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("rebuild and masking") {
  const std::vector<std::string> tokens = {"a", "b", "c"};
  const Coalition c = {true, false, true};
  CHECK(rebuild(tokens, c, MaskStrategy::Delete, "<mask>") == "a c");
  CHECK(rebuild(tokens, c, MaskStrategy::MaskToken, "<mask>") == "a <mask> c");
  CHECK(rebuild(tokens, Coalition(3, false), MaskStrategy::Delete, "<mask>").empty());
}

TEST_CASE("attribute picks exact or sampled") {
  const regard::LexiconScorer lex({"kind"}, {"rude"});
  AttributionParams p;
  p.mode = Mode::Auto;
  p.exact_cap = 3;
  const auto small = attribute("a rude man", lex, p);
  REQUIRE(small.size() == 3);
  CHECK(small[1].phi == doctest::Approx(1.0));
  CHECK(std::abs(small[0].phi) < 1e-12);
  p.mode = Mode::Exact;
  CHECK_THROWS_AS(attribute("one two three four", lex, p), Error);
  p.mode = Mode::Auto;
  const auto big = attribute("one rude two three four", lex, p);
  CHECK(big[1].phi == 1.0);
  CHECK(big[0].phi == 0.0);
}

TEST_CASE("low regard word selection") {
  CHECK(low_regard_words(with_phi({{"a", -0.1}, {"b", 0.0}})).empty());
  CHECK(low_regard_words(with_phi({{"first", 0.2}, {"second", 0.2}}), 1) == std::vector<std::string>{"first"});
  CHECK(low_regard_words(with_phi({{"x", 0.1}, {"y", 0.4}, {"z", 0.3}}), 2) == std::vector<std::string>{"y", "z"});
  CHECK(low_regard_words(with_phi({{"Stigma,", 0.3}, {"stigma.", 0.2}, {"hate", 0.1}})) ==
        std::vector<std::string>{"Stigma", "hate"});

  const auto lex = regard::LexiconScorer::load(testing::data_dir());
  AttributionParams p;
  const auto attribs = attribute("They overcame discrimination and challenges in their career.", *lex, p);
  const auto words = low_regard_words(attribs);
  CHECK(words.size() == 2);
  CHECK(std::find(words.begin(), words.end(), "discrimination") != words.end());
  CHECK(std::find(words.begin(), words.end(), "challenges") != words.end());
}
