#include "biasaudit/biasaudit.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "biasaudit/attribution.hpp"
#include "biasaudit/error.hpp"
#include "biasaudit/neutralizer.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/regard.hpp"

using namespace biasaudit;

struct ba_rules {
  neutralizer::RuleTables tables;
};

struct ba_scorer {
  std::shared_ptr<regard::Scorer> scorer;
};

struct ba_pipeline {
  pipeline::Settings settings;
};

namespace {

thread_local std::string g_last_error;

ba_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return BA_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return BA_ERR_IO;
    case ErrorCode::Parse: return BA_ERR_PARSE;
    case ErrorCode::MissingFixture: return BA_ERR_MISSING_FIXTURE;
    case ErrorCode::Network: return BA_ERR_NETWORK;
    case ErrorCode::Backend: return BA_ERR_BACKEND;
    case ErrorCode::MissingArtifact: return BA_ERR_MISSING_ARTIFACT;
    case ErrorCode::ConfigConflict: return BA_ERR_CONFIG_CONFLICT;
  }
  return BA_ERR_INTERNAL;
}

template <typename Fn>
ba_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return BA_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return BA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return BA_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string data_dir_or_default(const char* data_dir) {
  return data_dir ? std::string(data_dir) : pipeline::default_data_dir();
}

}  // namespace

extern "C" {

const char* ba_last_error(void) { return g_last_error.c_str(); }

const char* ba_status_name(ba_status status) {
  switch (status) {
    case BA_OK: return "ok";
    case BA_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BA_ERR_IO: return "i/o error";
    case BA_ERR_PARSE: return "parse error";
    case BA_ERR_MISSING_FIXTURE: return "missing replay fixture";
    case BA_ERR_NETWORK: return "network error";
    case BA_ERR_BACKEND: return "backend error";
    case BA_ERR_MISSING_ARTIFACT: return "missing artifact";
    case BA_ERR_CONFIG_CONFLICT: return "config conflict";
    case BA_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ba_version(void) { return "1.0.0"; }

void ba_string_free(char* s) { std::free(s); }

ba_status ba_rules_load(const char* data_dir, ba_rules** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    *out = new ba_rules{neutralizer::RuleTables::load(data_dir_or_default(data_dir))};
  });
}

void ba_rules_free(ba_rules* rules) { delete rules; }

ba_status ba_neutralize(const ba_rules* rules, const char* text, char** out_text) {
  return guarded([&] {
    require(rules, "rules");
    require(text, "text");
    require(out_text, "out_text");
    *out_text = dup_string(neutralizer::neutralize(text, rules->tables).text);
  });
}

ba_status ba_anonymize(const ba_rules* rules, const char* text, char** out_text) {
  return guarded([&] {
    require(rules, "rules");
    require(text, "text");
    require(out_text, "out_text");
    *out_text = dup_string(neutralizer::anonymize(text, rules->tables).text);
  });
}

ba_status ba_scorer_lexicon(const char* data_dir, ba_scorer** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    *out = new ba_scorer{regard::LexiconScorer::load(data_dir_or_default(data_dir))};
  });
}

ba_status ba_scorer_http(const char* endpoint, ba_scorer** out) {
  return guarded([&] {
    require(endpoint, "endpoint");
    require(out, "out");
    *out = nullptr;
    auto scorer = std::make_shared<regard::HttpScorer>(endpoint);
    scorer->check_health();
    *out = new ba_scorer{scorer};
  });
}

void ba_scorer_free(ba_scorer* scorer) { delete scorer; }

ba_status ba_score(const ba_scorer* scorer, const char* text, double out_probs[4]) {
  return guarded([&] {
    require(scorer, "scorer");
    require(text, "text");
    require(out_probs, "out_probs");
    const auto r = scorer->scorer->score(text);
    out_probs[0] = r.p_negative;
    out_probs[1] = r.p_neutral;
    out_probs[2] = r.p_positive;
    out_probs[3] = r.p_other;
  });
}

ba_status ba_shapley(const ba_scorer* scorer, const char* sentence, ba_shapley_mode mode, size_t samples,
                     uint64_t seed, double* out_phi, size_t capacity, size_t* out_count) {
  return guarded([&] {
    require(scorer, "scorer");
    require(sentence, "sentence");
    require(out_count, "out_count");
    if (capacity > 0) require(out_phi, "out_phi");
    attribution::AttributionParams params;
    switch (mode) {
      case BA_SHAPLEY_EXACT: params.mode = attribution::Mode::Exact; break;
      case BA_SHAPLEY_SAMPLED: params.mode = attribution::Mode::Sampled; break;
      case BA_SHAPLEY_AUTO: params.mode = attribution::Mode::Auto; break;
      default: fail(ErrorCode::InvalidArgument, "unknown Shapley mode");
    }
    if (samples > 0) params.samples = samples;
    params.seed = seed;
    params.validate();
    const auto attribs = attribution::attribute(sentence, *scorer->scorer, params);
    *out_count = attribs.size();
    for (size_t i = 0; i < attribs.size() && i < capacity; ++i) out_phi[i] = attribs[i].phi;
  });
}

size_t ba_setting_count(void) { return pipeline::known_settings().size(); }

ba_status ba_setting_info(size_t index, const char** key, const char** default_value, const char** help) {
  return guarded([&] {
    const auto settings = pipeline::known_settings();
    if (index >= settings.size()) fail(ErrorCode::InvalidArgument, "setting index out of range");
    // The table is built from string literals, so data() is NUL-terminated.
    if (key) *key = settings[index].key.data();
    if (default_value) *default_value = settings[index].default_value.data();
    if (help) *help = settings[index].help.data();
  });
}

ba_status ba_pipeline_create(ba_pipeline** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ba_pipeline{};
  });
}

ba_status ba_pipeline_set(ba_pipeline* p, const char* key, const char* value) {
  return guarded([&] {
    require(p, "pipeline");
    require(key, "key");
    require(value, "value");
    p->settings[key] = pipeline::canonical_setting(key, value);
  });
}

ba_status ba_pipeline_run(ba_pipeline* p, const char* stage) {
  return guarded([&] {
    require(p, "pipeline");
    require(stage, "stage");
    pipeline::Pipeline(p->settings).run(pipeline::stage_from_string(stage));
  });
}

void ba_pipeline_destroy(ba_pipeline* p) { delete p; }

}  // extern "C"
