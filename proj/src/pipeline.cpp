#include "biasaudit/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "biasaudit/analysis.hpp"
#include "biasaudit/attribution.hpp"
#include "biasaudit/corpus.hpp"
#include "biasaudit/debias.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/llm_client.hpp"
#include "biasaudit/neutralizer.hpp"
#include "biasaudit/parallel.hpp"
#include "biasaudit/promptgen.hpp"
#include "biasaudit/regard.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/tsne.hpp"

#ifndef BIASAUDIT_DATA_DIR
#define BIASAUDIT_DATA_DIR "data"
#endif

namespace biasaudit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kAllIdentityList = "control,straight_man,straight_woman,gay_man,lesbian_woman";

constexpr SettingInfo kSettings[] = {
    {"run_dir", SettingKind::Path, "", "run directory", false},
    {"corpus", SettingKind::Path, "", "biography corpus (JSONL with id, text)", false},
    {"annotations", SettingKind::Path, "", "person-span annotations (id, start, end TSV)", false},
    {"data_dir", SettingKind::Path, "", "rule tables, lexicon, stopwords and templates", false},
    {"mode", SettingKind::Choice, "replay", "LLM mode", false, "live|record|replay"},
    {"endpoint", SettingKind::Text, "https://api.openai.com", "completions endpoint base URL", false},
    {"api_key_env", SettingKind::Text, "OPENAI_API_KEY", "environment variable holding the API key", false},
    {"cache_dir", SettingKind::Path, "", "completion cache / replay fixtures (default {run}/cache)", false},
    {"max_in_flight", SettingKind::Integer, "4", "concurrent LLM and scoring requests", false},
    {"regard_endpoint", SettingKind::Text, "http://127.0.0.1:8000", "regard service base URL", false},
    {"seed", SettingKind::Integer, "0", "seed for sampling, attribution and t-SNE", true},
    {"identities", SettingKind::Identities, kAllIdentityList, "comma-separated identities", true},
    {"min_sentences", SettingKind::Integer, "4", "minimum sentences per biography", true},
    {"max_sentences", SettingKind::Integer, "9", "maximum sentences per biography", true},
    {"sample_size", SettingKind::Integer, "200", "biographies sampled", true},
    {"model", SettingKind::Text, "gpt-3.5-turbo-instruct", "completion model", true},
    {"temperature", SettingKind::Real, "0.7", "sampling temperature", true},
    {"max_tokens", SettingKind::Integer, "128", "completion length limit", true},
    {"regard_backend", SettingKind::Choice, "lexicon", "regard scorer", true, "http|lexicon"},
    {"min_count", SettingKind::Integer, "5", "PMI minimum word count", true},
    {"alpha", SettingKind::Real, "1", "PMI smoothing", true},
    {"top_n", SettingKind::Integer, "20", "words per label in frequency charts", true},
    {"perplexity", SettingKind::Real, "30", "t-SNE perplexity", true},
    {"learning_rate", SettingKind::Real, "200", "t-SNE learning rate", true},
    {"iterations", SettingKind::Integer, "1000", "t-SNE iterations", true},
    {"attribution_mode", SettingKind::Choice, "auto", "Shapley mode", true, "exact|sampled|auto"},
    {"samples", SettingKind::Integer, "2000", "sampled Shapley permutations", true},
    {"exact_cap", SettingKind::Integer, "20", "largest token count for exact Shapley", true},
    {"mask_strategy", SettingKind::Choice, "delete", "how absent tokens are rendered", true, "delete|mask"},
    {"mask_token", SettingKind::Text, "<mask>", "placeholder for mask_strategy=mask", true},
    {"k", SettingKind::Integer, "5", "low-regard words per sentence", true},
    {"skip_threshold", SettingKind::Real, "0", "sentences at or above this regard are not debiased", true},
    {"min_gain", SettingKind::Real, "0.05", "minimum regard gain to accept a rewrite", true},
    {"min_similarity", SettingKind::Real, "0.5", "minimum cosine to the original to accept", true},
    {"max_rounds", SettingKind::Integer, "2", "reason/rewrite rounds per sentence", true},
};

const SettingInfo* find_setting(std::string_view key) {
  for (const auto& s : kSettings)
    if (s.key == key) return &s;
  return nullptr;
}

std::string render_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr Stage kStages[] = {Stage::Neutralize, Stage::Generate, Stage::Analyze,
                             Stage::Attribute,  Stage::Debias,   Stage::Report};

struct Required {
  std::string_view file;
  Stage producer;
};

std::vector<Required> required_inputs(Stage s) {
  switch (s) {
    case Stage::Neutralize: return {};
    case Stage::Generate: return {{"neutral.jsonl", Stage::Neutralize}};
    case Stage::Analyze: return {{"generations.jsonl", Stage::Generate}};
    case Stage::Attribute:
      return {{"generations.jsonl", Stage::Generate}, {"analysis/regard.csv", Stage::Analyze}};
    case Stage::Debias:
      return {{"analysis/regard.csv", Stage::Analyze}, {"attribution.jsonl", Stage::Attribute}};
    case Stage::Report:
      return {{"analysis/table1.csv", Stage::Analyze},
              {"analysis/regard_diff.csv", Stage::Analyze},
              {"analysis/frequencies.csv", Stage::Analyze},
              {"analysis/pmi.csv", Stage::Analyze},
              {"analysis/tsne.csv", Stage::Analyze},
              {"analysis/tsne_kl.csv", Stage::Analyze}};
  }
  return {};
}

std::string sentence_id(const std::string& bio_id, const std::string& identity) {
  return bio_id + ":" + identity;
}

json regard_json(const regard::RegardResult& r) {
  return json{{"negative", r.p_negative},
              {"neutral", r.p_neutral},
              {"positive", r.p_positive},
              {"other", r.p_other},
              {"scalar", r.scalar()}};
}

struct GenerationRow {
  std::string bio_id;
  std::string identity;
  std::string text;
};

class CsvBuilder {
public:
  CsvBuilder(const std::string& digest, std::initializer_list<std::string_view> header) {
    out_ << "# manifest: " << digest << '\n';
    row(header);
  }
  template <typename Range>
  void row(const Range& fields) {
    bool first = true;
    for (const auto& f : fields) {
      if (!first) out_ << ',';
      out_ << io::csv_field(f);
      first = false;
    }
    out_ << '\n';
  }
  void row(std::initializer_list<std::string_view> fields) { row<std::initializer_list<std::string_view>>(fields); }
  std::string str() const { return out_.str(); }

private:
  std::ostringstream out_;
};

std::vector<std::vector<std::string>> csv_body(const fs::path& path) {
  auto rows = io::read_csv(path);
  if (rows.empty()) fail(ErrorCode::Parse, path.string() + ": missing header row");
  rows.erase(rows.begin());
  return rows;
}

double parse_double(const std::string& s, const fs::path& where) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::Parse, where.string() + ": not a number: '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s, const fs::path& where) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::Parse, where.string() + ": not a count: '" + s + "'");
  return v;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Neutralize: return "neutralize";
    case Stage::Generate: return "generate";
    case Stage::Analyze: return "analyze";
    case Stage::Attribute: return "attribute";
    case Stage::Debias: return "debias";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : kStages)
    if (to_string(st) == s) return st;
  fail(ErrorCode::InvalidArgument, "unknown stage '" + std::string(s) + "'");
}

std::span<const SettingInfo> known_settings() { return kSettings; }

std::string default_data_dir() {
  if (const char* env = std::getenv("BIASAUDIT_DATA_DIR"); env && *env) return env;
  return BIASAUDIT_DATA_DIR;
}

std::string canonical_setting(std::string_view key, std::string_view value) {
  const SettingInfo* info = find_setting(key);
  if (!info) fail(ErrorCode::InvalidArgument, "unknown setting '" + std::string(key) + "'");
  const std::string v(value);
  auto bad = [&](std::string_view what) -> std::string {
    fail(ErrorCode::InvalidArgument, "setting " + std::string(key) + ": " + std::string(what) + ", got '" + v + "'");
  };
  switch (info->kind) {
    case SettingKind::Text:
    case SettingKind::Path: return v;
    case SettingKind::Integer: {
      long long n = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) return bad("expected an integer");
      if (n < 0) return bad("expected a non-negative integer");
      return std::to_string(n);
    }
    case SettingKind::Real: {
      double d = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
      if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(d))
        return bad("expected a finite number");
      return render_double(d);
    }
    case SettingKind::Choice: {
      std::string_view choices = info->choices;
      while (!choices.empty()) {
        auto bar = choices.find('|');
        if (choices.substr(0, bar) == v) return v;
        if (bar == std::string_view::npos) break;
        choices.remove_prefix(bar + 1);
      }
      return bad("expected one of " + std::string(info->choices));
    }
    case SettingKind::Identities: {
      std::string out;
      for (auto id : promptgen::parse_identities(v)) {
        if (!out.empty()) out += ',';
        out += promptgen::to_string(id);
      }
      return out;
    }
  }
  return v;
}

struct Pipeline::Impl {
  Settings given;
  Hooks hooks;
  fs::path run;
  json manifest;
  std::map<std::string, std::string> cfg;  // resolved: manifest semantics + runtime
  std::string digest;

  const std::string& get(const std::string& key) const {
    auto it = cfg.find(key);
    if (it == cfg.end()) fail(ErrorCode::InvalidArgument, "setting '" + key + "' is not resolved");
    return it->second;
  }
  long long integer(const std::string& key) const { return std::stoll(get(key)); }
  double real(const std::string& key) const { return std::stod(get(key)); }
  fs::path data_dir() const {
    const auto& d = get("data_dir");
    return d.empty() ? fs::path(default_data_dir()) : fs::path(d);
  }
  fs::path path(std::string_view rel) const { return run / rel; }
  std::size_t workers() const { return static_cast<std::size_t>(std::max(1LL, integer("max_in_flight"))); }

  void open(Stage stage);
  void save_manifest() const { io::write_file_atomic(run / "manifest", manifest.dump(2) + "\n"); }

  std::shared_ptr<regard::Scorer> make_scorer() const;
  std::unique_ptr<llm::LlmClient> make_llm() const;
  attribution::AttributionParams attribution_params() const;
  std::vector<GenerationRow> generations() const;
  std::map<std::string, double> regard_scalars() const;
  std::vector<std::size_t> low_regard(const std::vector<GenerationRow>& gens) const;

  void neutralize();
  void generate();
  void analyze();
  void attribute();
  void debias();
  void report();
};

void Pipeline::Impl::open(Stage stage) {
  const fs::path manifest_path = run / "manifest";
  std::optional<std::string> corpus_digest;
  if (auto it = given.find("corpus"); it != given.end() && !it->second.empty()) {
    if (!fs::exists(it->second)) fail(ErrorCode::Io, "corpus not found: " + it->second);
    corpus_digest = io::sha256_hex(io::read_file(it->second));
  }

  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(io::read_file(manifest_path));
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, manifest_path.string() + ": " + e.what());
    }
    const json& frozen = manifest.at("config");
    for (const auto& [key, value] : given) {
      const SettingInfo* info = find_setting(key);
      if (!info->semantic) continue;
      const std::string recorded = frozen.value(key, std::string());
      if (recorded != value)
        fail(ErrorCode::ConfigConflict, "setting " + key + "=" + value + " conflicts with the run manifest (" + key +
                                            "=" + recorded + ")");
    }
    if (corpus_digest && *corpus_digest != manifest.at("corpus_digest").get<std::string>())
      fail(ErrorCode::ConfigConflict, "corpus differs from the one recorded in the run manifest");
  } else {
    if (stage != Stage::Neutralize)
      fail(ErrorCode::MissingArtifact, "stage " + std::string(to_string(stage)) + " needs " +
                                           manifest_path.string() + "; run neutralize first");
    if (!corpus_digest) fail(ErrorCode::InvalidArgument, "neutralize needs a corpus");
    json config = json::object();
    for (const auto& s : kSettings) {
      if (!s.semantic) continue;
      auto it = given.find(std::string(s.key));
      config[std::string(s.key)] = it != given.end() ? it->second : canonical_setting(s.key, s.default_value);
    }
    manifest = json::object();
    manifest["config"] = config;
    manifest["corpus_digest"] = *corpus_digest;
    manifest["digest"] = io::sha256_hex(config.dump() + "\n" + *corpus_digest);
    manifest["backends"] = json::object();
    manifest["stages"] = json::object();
    manifest["created_at"] = utc_now();
  }

  digest = manifest.at("digest").get<std::string>();
  cfg.clear();
  for (const auto& s : kSettings) {
    const std::string key(s.key);
    if (s.semantic) {
      cfg[key] = manifest.at("config").value(key, canonical_setting(s.key, s.default_value));
    } else {
      auto it = given.find(key);
      cfg[key] = it != given.end() ? it->second : std::string(s.default_value);
    }
  }
  if (cfg["cache_dir"].empty()) cfg["cache_dir"] = (run / "cache").string();

  for (const auto& req : required_inputs(stage)) {
    if (!fs::exists(run / req.file))
      fail(ErrorCode::MissingArtifact, "stage " + std::string(to_string(stage)) + " needs " +
                                           (run / req.file).string() + "; run " +
                                           std::string(to_string(req.producer)) + " first");
  }
}

std::shared_ptr<regard::Scorer> Pipeline::Impl::make_scorer() const {
  std::shared_ptr<regard::Scorer> scorer;
  if (get("regard_backend") == "http") {
    auto http = std::make_shared<regard::HttpScorer>(get("regard_endpoint"), hooks.regard_transport);
    http->check_health();
    scorer = http;
  } else {
    scorer = regard::LexiconScorer::load(data_dir());
  }
  return scorer;
}

std::unique_ptr<llm::LlmClient> Pipeline::Impl::make_llm() const {
  llm::LlmParams params;
  params.model = get("model");
  params.temperature = real("temperature");
  params.max_tokens = static_cast<int>(integer("max_tokens"));
  params.endpoint = get("endpoint");
  llm::ClientOptions options;
  options.mode = llm::mode_from_string(get("mode"));
  options.cache_dir = get("cache_dir");
  options.api_key_env = get("api_key_env");
  options.max_in_flight = workers();
  options.transport = hooks.llm_transport;
  options.sleep = hooks.sleep;
  if (options.mode == llm::Mode::Record) fs::create_directories(options.cache_dir);
  return std::make_unique<llm::LlmClient>(params, std::move(options));
}

attribution::AttributionParams Pipeline::Impl::attribution_params() const {
  attribution::AttributionParams p;
  const auto& mode = get("attribution_mode");
  p.mode = mode == "exact" ? attribution::Mode::Exact
           : mode == "sampled" ? attribution::Mode::Sampled
                               : attribution::Mode::Auto;
  p.samples = static_cast<std::size_t>(integer("samples"));
  p.seed = static_cast<std::uint64_t>(integer("seed"));
  p.mask = get("mask_strategy") == "mask" ? attribution::MaskStrategy::MaskToken : attribution::MaskStrategy::Delete;
  p.mask_token = get("mask_token");
  p.exact_cap = static_cast<std::size_t>(integer("exact_cap"));
  p.validate();
  return p;
}

std::vector<GenerationRow> Pipeline::Impl::generations() const {
  std::vector<GenerationRow> out;
  for (const auto& rec : io::read_jsonl(path("generations.jsonl")))
    out.push_back({rec.at("bio_id").get<std::string>(), rec.at("identity").get<std::string>(),
                   rec.at("text").get<std::string>()});
  return out;
}

std::map<std::string, double> Pipeline::Impl::regard_scalars() const {
  const fs::path p = path("analysis/regard.csv");
  std::map<std::string, double> out;
  for (const auto& row : csv_body(p)) {
    if (row.size() != 7) fail(ErrorCode::Parse, p.string() + ": expected 7 columns");
    out[sentence_id(row[0], row[1])] = parse_double(row[6], p);
  }
  return out;
}

std::vector<std::size_t> Pipeline::Impl::low_regard(const std::vector<GenerationRow>& gens) const {
  const auto scalars = regard_scalars();
  const double threshold = real("skip_threshold");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    auto it = scalars.find(sentence_id(gens[i].bio_id, gens[i].identity));
    if (it == scalars.end())
      fail(ErrorCode::MissingArtifact, "analysis/regard.csv has no row for " +
                                           sentence_id(gens[i].bio_id, gens[i].identity) + "; rerun analyze");
    if (it->second < threshold) out.push_back(i);
  }
  return out;
}

void Pipeline::Impl::neutralize() {
  corpus::CorpusConfig cc;
  cc.min_sentences = static_cast<int>(integer("min_sentences"));
  cc.max_sentences = static_cast<int>(integer("max_sentences"));
  cc.sample_size = static_cast<std::size_t>(integer("sample_size"));
  cc.seed = static_cast<std::uint64_t>(integer("seed"));
  cc.validate();

  const auto bios = corpus::load_corpus(get("corpus"));
  const auto sample = corpus::filter_and_sample(bios, cc);
  const auto rules = neutralizer::RuleTables::load(data_dir());
  std::map<std::string, std::vector<neutralizer::EntitySpan>> annotations;
  if (!get("annotations").empty()) annotations = neutralizer::load_annotations(get("annotations"));

  std::vector<json> records;
  for (const auto& bio : sample) {
    std::optional<std::span<const neutralizer::EntitySpan>> spans;
    if (auto it = annotations.find(bio.id); it != annotations.end()) spans = it->second;
    const auto anon = neutralizer::anonymize(bio.text, rules, spans);
    const auto neutral = neutralizer::neutralize(anon.text, rules);
    json applied = json::array();
    for (const auto& a : neutral.applied)
      applied.push_back({{"pattern", a.pattern},
                         {"replacement", a.replacement},
                         {"category", neutralizer::to_string(a.category)},
                         {"position", a.position},
                         {"length", a.length}});
    records.push_back({{"id", bio.id},
                       {"text", neutral.text},
                       {"sentence_count", bio.sentence_count},
                       {"entities_masked", anon.entities_masked},
                       {"applied", applied},
                       {"manifest", digest}});
  }
  io::write_jsonl_atomic(path("neutral.jsonl"), records);
}

void Pipeline::Impl::generate() {
  const auto identities = promptgen::parse_identities(get("identities"));
  std::vector<promptgen::Prompt> prompts;
  for (const auto& rec : io::read_jsonl(path("neutral.jsonl"))) {
    auto p = promptgen::build_prompts(rec.at("id").get<std::string>(), rec.at("text").get<std::string>(), identities);
    prompts.insert(prompts.end(), p.begin(), p.end());
  }
  std::vector<json> prompt_records;
  for (const auto& p : prompts)
    prompt_records.push_back(
        {{"bio_id", p.bio_id}, {"identity", promptgen::to_string(p.identity)}, {"text", p.text}, {"manifest", digest}});
  io::write_jsonl_atomic(path("prompts.jsonl"), prompt_records);

  auto client = make_llm();
  const auto gens = client->complete_batch(prompts);
  std::vector<json> records;
  for (const auto& g : gens)
    records.push_back({{"bio_id", g.bio_id},
                       {"identity", promptgen::to_string(g.identity)},
                       {"prompt_hash", g.prompt_hash},
                       {"text", g.text},
                       {"manifest", digest}});
  io::write_jsonl_atomic(path("generations.jsonl"), records);
  manifest["backends"]["llm"] = get("model") + " (" + get("mode") + ")";
}

void Pipeline::Impl::analyze() {
  const auto gens = generations();
  if (gens.empty()) fail(ErrorCode::InvalidArgument, "generations.jsonl is empty");
  auto scorer = make_scorer();
  manifest["backends"]["regard"] = scorer->describe();
  fs::create_directories(run / "analysis");

  std::vector<std::string> texts;
  for (const auto& g : gens) texts.push_back(g.text);
  const auto scores = scorer->score_batch(texts);

  CsvBuilder regard_csv(digest, {"bio_id", "identity", "negative", "neutral", "positive", "other", "scalar"});
  std::vector<regard::LabeledRegard> labeled;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto& r = scores[i];
    regard_csv.row({gens[i].bio_id, gens[i].identity, io::fixed6(r.p_negative), io::fixed6(r.p_neutral),
                    io::fixed6(r.p_positive), io::fixed6(r.p_other), io::fixed6(r.scalar())});
    labeled.emplace_back(promptgen::identity_from_string(gens[i].identity), r);
  }
  io::write_file_atomic(path("analysis/regard.csv"), regard_csv.str());

  const auto diffs = regard::group_diff(labeled);
  CsvBuilder diff_csv(digest, {"identity", "mean_regard", "diff_vs_control", "n"});
  for (const auto& d : diffs)
    diff_csv.row({std::string(promptgen::to_string(d.identity)), io::fixed6(d.mean_scalar),
                  io::fixed6(d.diff_vs_control), std::to_string(d.n)});
  io::write_file_atomic(path("analysis/regard_diff.csv"), diff_csv.str());

  const auto tokenizer = analysis::Tokenizer::load(data_dir());
  std::vector<analysis::TokenizedDoc> docs;
  std::vector<analysis::KeyedDoc> keyed;
  for (const auto& g : gens) {
    auto tokens = tokenizer(g.text);
    docs.push_back({g.identity, tokens});
    keyed.push_back({{g.bio_id, g.identity}, std::move(tokens)});
  }

  const auto freq = analysis::frequencies(docs);
  CsvBuilder freq_csv(digest, {"label", "word", "count"});
  for (const auto& [label, words] : freq.labels())
    for (const auto& [word, count] : freq.top_n(label, words.size())) freq_csv.row({label, word, std::to_string(count)});
  io::write_file_atomic(path("analysis/frequencies.csv"), freq_csv.str());

  const auto pmi = analysis::pmi(docs, static_cast<std::size_t>(integer("min_count")), real("alpha"));
  CsvBuilder pmi_csv(digest, {"label", "word", "pmi_bits"});
  for (const auto& e : pmi) pmi_csv.row({e.label, e.word, io::fixed6(e.pmi_bits)});
  io::write_file_atomic(path("analysis/pmi.csv"), pmi_csv.str());

  const auto matrix = analysis::tfidf(keyed);
  const auto sims = analysis::mean_group_cosine(matrix);
  CsvBuilder sim_csv(digest, {"identity", "mean_cosine", "n"});
  for (const auto& s : sims) sim_csv.row({s.identity, io::fixed6(s.mean_cosine), std::to_string(s.n)});
  io::write_file_atomic(path("analysis/similarity.csv"), sim_csv.str());

  CsvBuilder table1(digest, {"identity", "mean_cosine", "regard_diff"});
  for (const auto& s : sims) {
    auto id = promptgen::identity_from_string(s.identity);
    auto it = std::find_if(diffs.begin(), diffs.end(), [&](const auto& d) { return d.identity == id; });
    table1.row({s.identity, io::fixed6(s.mean_cosine), io::fixed6(it == diffs.end() ? 0.0 : it->diff_vs_control)});
  }
  io::write_file_atomic(path("analysis/table1.csv"), table1.str());

  analysis::TsneParams tp;
  tp.perplexity = real("perplexity");
  tp.learning_rate = real("learning_rate");
  tp.iterations = static_cast<int>(integer("iterations"));
  tp.seed = static_cast<std::uint64_t>(integer("seed"));
  tp.validate();
  const auto layout = analysis::tsne(matrix, tp);
  CsvBuilder tsne_csv(digest, {"bio_id", "identity", "x", "y"});
  for (std::size_t i = 0; i < layout.points.size(); ++i)
    tsne_csv.row({matrix.doc_keys[i].bio_id, matrix.doc_keys[i].identity, io::fixed6(layout.points[i][0]),
                  io::fixed6(layout.points[i][1])});
  io::write_file_atomic(path("analysis/tsne.csv"), tsne_csv.str());
  CsvBuilder kl_csv(digest, {"iteration", "kl"});
  for (const auto& c : layout.checkpoints) kl_csv.row({std::to_string(c.iteration), io::fixed6(c.kl)});
  io::write_file_atomic(path("analysis/tsne_kl.csv"), kl_csv.str());
}

void Pipeline::Impl::attribute() {
  const auto gens = generations();
  const auto selected = low_regard(gens);
  auto scorer = make_scorer();
  manifest["backends"]["regard"] = scorer->describe();
  const auto params = attribution_params();
  const auto k = static_cast<std::size_t>(integer("k"));

  std::vector<std::vector<json>> per_sentence(selected.size());
  parallel_for(selected.size(), workers(), [&](std::size_t j) {
    const auto& g = gens[selected[j]];
    const auto attribs = attribution::attribute(g.text, *scorer, params);
    const auto chosen = attribution::select_low_regard(attribs, k);
    const std::set<std::size_t> chosen_set(chosen.begin(), chosen.end());
    for (const auto& a : attribs)
      per_sentence[j].push_back({{"sentence_id", sentence_id(g.bio_id, g.identity)},
                                 {"token", a.token},
                                 {"index", a.index},
                                 {"phi", a.phi},
                                 {"selected", chosen_set.contains(a.index)},
                                 {"manifest", digest}});
  });
  std::vector<json> records;
  for (auto& block : per_sentence)
    for (auto& r : block) records.push_back(std::move(r));
  io::write_jsonl_atomic(path("attribution.jsonl"), records);
}

void Pipeline::Impl::debias() {
  const auto gens = generations();
  const auto selected = low_regard(gens);
  auto scorer = make_scorer();
  manifest["backends"]["regard"] = scorer->describe();
  auto client = make_llm();
  manifest["backends"]["llm"] = get("model") + " (" + get("mode") + ")";

  debias::DebiasParams dp;
  dp.k = static_cast<std::size_t>(integer("k"));
  dp.skip_threshold = real("skip_threshold");
  dp.min_gain = real("min_gain");
  dp.min_similarity = real("min_similarity");
  dp.max_rounds = static_cast<int>(integer("max_rounds"));
  dp.validate();
  const debias::Debiaser debiaser([&client](const std::string& prompt) { return client->complete_text(prompt).text; },
                                  *scorer, attribution_params(), analysis::Tokenizer::load(data_dir()),
                                  debias::Templates::load(data_dir()), dp);

  std::vector<std::pair<debias::DebiasResult, debias::DebiasResult>> results(selected.size());
  parallel_for(selected.size(), workers(), [&](std::size_t j) {
    const auto& text = gens[selected[j]].text;
    results[j] = {debiaser.baseline(text), debiaser.cot(text)};
  });

  std::vector<json> records;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const auto& g = gens[selected[j]];
    for (const auto* r : {&results[j].first, &results[j].second})
      records.push_back({{"sentence_id", sentence_id(g.bio_id, g.identity)},
                         {"bio_id", g.bio_id},
                         {"identity", g.identity},
                         {"method", debias::to_string(r->method)},
                         {"original", r->original},
                         {"low_words", r->low_words},
                         {"reason", r->reason},
                         {"rewritten", r->rewritten},
                         {"regard_before", regard_json(r->regard_before)},
                         {"regard_after", regard_json(r->regard_after)},
                         {"gain", r->gain()},
                         {"similarity", r->similarity},
                         {"accepted", r->accepted},
                         {"rounds_used", r->rounds_used},
                         {"skipped", r->skipped},
                         {"nothing_to_rewrite", r->nothing_to_rewrite},
                         {"manifest", digest}});
  }
  io::write_jsonl_atomic(path("debias.jsonl"), records);

  // Debias summary view: an accepted rewrite's regard stands in for its original;
  // the control mean stays the unmodified reference.
  const auto scalars = regard_scalars();
  std::map<std::string, double> baseline = scalars, cot = scalars;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const auto key = sentence_id(gens[selected[j]].bio_id, gens[selected[j]].identity);
    if (results[j].first.accepted) baseline[key] = results[j].first.regard_after.scalar();
    if (results[j].second.accepted) cot[key] = results[j].second.regard_after.scalar();
  }
  std::map<std::string, std::vector<std::string>> keys_by_identity;
  for (const auto& g : gens) keys_by_identity[g.identity].push_back(sentence_id(g.bio_id, g.identity));
  auto mean_of = [&](const std::map<std::string, double>& values, const std::string& identity) {
    std::vector<double> v;
    for (const auto& key : keys_by_identity[identity]) v.push_back(values.at(key));
    return regard::stable_mean(std::move(v));
  };
  if (!keys_by_identity.contains("control"))
    fail(ErrorCode::InvalidArgument, "debias summary needs control generations");
  const double control = mean_of(scalars, "control");

  CsvBuilder summary(digest, {"identity", "diff_original", "diff_baseline", "diff_cot"});
  for (auto id : promptgen::kAllIdentities) {
    const std::string name(promptgen::to_string(id));
    if (id == promptgen::Identity::Control || !keys_by_identity.contains(name)) continue;
    summary.row({name, io::fixed6(control - mean_of(scalars, name)), io::fixed6(control - mean_of(baseline, name)),
                 io::fixed6(control - mean_of(cot, name))});
  }
  io::write_file_atomic(path("analysis/debias_summary.csv"), summary.str());
}

void Pipeline::Impl::report() {
  fs::create_directories(run / "report");
  std::ostringstream md;
  md << "# Bias audit report\n\n";
  md << "Manifest digest: `" << digest << "`\n\n";
  md << "| setting | value |\n|---|---|\n";
  for (const auto& [key, value] : manifest.at("config").items()) md << "| " << key << " | " << value.get<std::string>() << " |\n";
  md << "\n";
  if (manifest.contains("backends"))
    for (const auto& [role, desc] : manifest["backends"].items())
      md << "- " << role << " backend: " << desc.get<std::string>() << "\n";
  md << "\n";

  // Similarity and regard difference table
  const auto t1_rows = csv_body(path("analysis/table1.csv"));
  CsvBuilder t1(digest, {"identity", "mean_cosine", "regard_diff"});
  md << "## Similarity and regard difference vs control\n\n";
  md << "| identity | mean cosine | regard diff |\n|---|---|---|\n";
  for (const auto& r : t1_rows) {
    if (r.size() != 3) fail(ErrorCode::Parse, "analysis/table1.csv: expected 3 columns");
    t1.row(r);
    md << "| " << r[0] << " | " << r[1] << " | " << r[2] << " |\n";
  }
  io::write_file_atomic(path("report/table1.csv"), t1.str());
  md << "\nRegard diff is mean(control) - mean(identity) of the scalar p_positive - p_negative; "
        "positive values mean the identity is regarded lower than control.\n\n";

  md << "## Regard by identity\n\n| identity | mean regard | diff vs control | n |\n|---|---|---|---|\n";
  for (const auto& r : csv_body(path("analysis/regard_diff.csv"))) {
    if (r.size() != 4) fail(ErrorCode::Parse, "analysis/regard_diff.csv: expected 4 columns");
    md << "| " << r[0] << " | " << r[1] << " | " << r[2] << " | " << r[3] << " |\n";
  }
  md << "\n";

  // Frequencies
  const auto top_n = static_cast<std::size_t>(integer("top_n"));
  std::vector<report::LabelBars> panels;
  const fs::path freq_path = path("analysis/frequencies.csv");
  for (const auto& r : csv_body(freq_path)) {
    if (r.size() != 3) fail(ErrorCode::Parse, freq_path.string() + ": expected 3 columns");
    if (panels.empty() || panels.back().label != r[0]) panels.push_back({r[0], {}});
    if (panels.back().bars.size() < top_n) panels.back().bars.emplace_back(r[1], parse_size(r[2], freq_path));
  }
  io::write_file_atomic(path("report/frequencies.svg"), report::render_frequency_svg(panels));

  md << "## Most associated words (PMI, bits)\n\n";
  std::map<std::string, std::vector<std::string>> top_pmi;
  for (const auto& r : csv_body(path("analysis/pmi.csv"))) {
    if (r.size() != 3) fail(ErrorCode::Parse, "analysis/pmi.csv: expected 3 columns");
    auto& list = top_pmi[r[0]];
    if (list.size() < 10) list.push_back(r[1] + " (" + r[2] + ")");
  }
  for (const auto& [label, words] : top_pmi) {
    md << "- " << label << ":";
    for (std::size_t i = 0; i < words.size(); ++i) md << (i ? ", " : " ") << words[i];
    md << "\n";
  }
  md << "\nRanked word frequencies per identity: `frequencies.svg`.\n\n";

  // t-SNE
  std::vector<report::ScatterPoint> points;
  const fs::path tsne_path = path("analysis/tsne.csv");
  for (const auto& r : csv_body(tsne_path)) {
    if (r.size() != 4) fail(ErrorCode::Parse, tsne_path.string() + ": expected 4 columns");
    points.push_back({r[1], parse_double(r[2], tsne_path), parse_double(r[3], tsne_path)});
  }
  std::vector<std::string> order;
  for (auto id : promptgen::kAllIdentities) order.emplace_back(promptgen::to_string(id));
  io::write_file_atomic(path("report/tsne.svg"),
                        report::render_scatter_svg(points, order, "t-SNE of TF-IDF generation embeddings"));
  const auto kl_rows = csv_body(path("analysis/tsne_kl.csv"));
  md << "## t-SNE\n\n`tsne.svg` plots " << points.size() << " generations coloured by identity.";
  if (kl_rows.size() >= 2 && kl_rows.front().size() == 2 && kl_rows.back().size() == 2)
    md << " KL divergence " << kl_rows.front()[1] << " at iteration " << kl_rows.front()[0] << ", " << kl_rows.back()[1]
       << " at iteration " << kl_rows.back()[0] << ".";
  md << "\n\n";

  // Debiasing
  std::vector<json> records;
  if (fs::exists(path("debias.jsonl"))) records = io::read_jsonl(path("debias.jsonl"));
  const fs::path table3_path = path("report/table3.csv");
  const fs::path debias_svg = path("report/debias_tsne.svg");
  md << "## Debiasing\n\n";
  if (records.empty() || !fs::exists(path("analysis/debias_summary.csv"))) {
    md << "No debias records in this run; the debiasing section is omitted.\n";
    if (fs::exists(table3_path)) fs::remove(table3_path);
    if (fs::exists(debias_svg)) fs::remove(debias_svg);
  } else {
    CsvBuilder t3(digest, {"identity", "original", "baseline", "cot"});
    md << "| identity | original | baseline | cot |\n|---|---|---|---|\n";
    for (const auto& r : csv_body(path("analysis/debias_summary.csv"))) {
      if (r.size() != 4) fail(ErrorCode::Parse, "analysis/debias_summary.csv: expected 4 columns");
      t3.row(r);
      md << "| " << r[0] << " | " << r[1] << " | " << r[2] << " | " << r[3] << " |\n";
    }
    io::write_file_atomic(table3_path, t3.str());

    std::map<std::string, std::pair<std::size_t, std::size_t>> accepted;  // method -> (accepted, total)
    std::vector<std::string> originals, rewrites;
    for (const auto& rec : records) {
      const auto method = rec.at("method").get<std::string>();
      auto& [acc, total] = accepted[method];
      ++total;
      if (rec.at("accepted").get<bool>()) {
        ++acc;
        if (method == "cot") {
          originals.push_back(rec.at("original").get<std::string>());
          rewrites.push_back(rec.at("rewritten").get<std::string>());
        }
      }
    }
    md << "\nValues are regard diffs vs control with accepted rewrites substituted for their originals.\n\n";
    for (const auto& [method, counts] : accepted)
      md << "- " << method << ": " << counts.first << " of " << counts.second << " rewrites accepted\n";

    if (originals.size() + rewrites.size() >= 5) {
      const auto tokenizer = analysis::Tokenizer::load(data_dir());
      std::vector<analysis::KeyedDoc> docs;
      for (std::size_t i = 0; i < originals.size(); ++i) {
        docs.push_back({{std::to_string(i), "original"}, tokenizer(originals[i])});
        docs.push_back({{std::to_string(i), "debiased"}, tokenizer(rewrites[i])});
      }
      const auto matrix = analysis::tfidf(docs);
      analysis::TsneParams tp;
      tp.perplexity = real("perplexity");
      tp.learning_rate = real("learning_rate");
      tp.iterations = static_cast<int>(integer("iterations"));
      tp.seed = static_cast<std::uint64_t>(integer("seed"));
      std::vector<report::ScatterPoint> pts;
      try {
        const auto layout = analysis::tsne(matrix, tp);
        for (std::size_t i = 0; i < layout.points.size(); ++i)
          pts.push_back({matrix.doc_keys[i].identity, layout.points[i][0], layout.points[i][1]});
      } catch (const Error&) {
        pts.clear();
      }
      if (!pts.empty()) {
        const std::vector<std::string> labels = {"original", "debiased"};
        io::write_file_atomic(debias_svg,
                              report::render_scatter_svg(pts, labels, "Original vs debiased (accepted CoT rewrites)"));
        md << "\n`debias_tsne.svg` overlays " << originals.size()
           << " low-regard originals and their accepted CoT rewrites.\n";
      }
    }
  }
  io::write_file_atomic(path("report/summary.md"), md.str());
}

Pipeline::Pipeline(Settings explicit_settings, Hooks hooks) : impl_(std::make_unique<Impl>()) {
  for (auto& [key, value] : explicit_settings) impl_->given[key] = canonical_setting(key, value);
  impl_->hooks = std::move(hooks);
  auto it = impl_->given.find("run_dir");
  if (it == impl_->given.end() || it->second.empty()) fail(ErrorCode::InvalidArgument, "a run directory is required");
  impl_->run = it->second;
}

Pipeline::~Pipeline() = default;

void Pipeline::run(Stage stage) {
  auto& d = *impl_;
  if (stage == Stage::Neutralize) fs::create_directories(d.run);
  d.open(stage);
  const std::string name(to_string(stage));
  const std::string started = utc_now();
  switch (stage) {
    case Stage::Neutralize: d.neutralize(); break;
    case Stage::Generate: d.generate(); break;
    case Stage::Analyze: d.analyze(); break;
    case Stage::Attribute: d.attribute(); break;
    case Stage::Debias: d.debias(); break;
    case Stage::Report: d.report(); break;
  }
  d.manifest["stages"][name] = {{"completed", true}, {"started_at", started}, {"finished_at", utc_now()}};
  d.save_manifest();
}

const json& Pipeline::manifest() const { return impl_->manifest; }

}  // namespace biasaudit::pipeline
