#ifndef BIASAUDIT_H
#define BIASAUDIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BA_API __declspec(dllexport)
#else
#define BA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ba_status {
  BA_OK = 0,
  BA_ERR_INVALID_ARGUMENT = 1,
  BA_ERR_IO = 2,
  BA_ERR_PARSE = 3,
  BA_ERR_MISSING_FIXTURE = 4,
  BA_ERR_NETWORK = 5,
  BA_ERR_BACKEND = 6,
  BA_ERR_MISSING_ARTIFACT = 7,
  BA_ERR_CONFIG_CONFLICT = 8,
  BA_ERR_INTERNAL = 9
} ba_status;

typedef enum ba_shapley_mode { BA_SHAPLEY_EXACT = 0, BA_SHAPLEY_SAMPLED = 1, BA_SHAPLEY_AUTO = 2 } ba_shapley_mode;

typedef struct ba_rules ba_rules;
typedef struct ba_scorer ba_scorer;
typedef struct ba_pipeline ba_pipeline;

/* Message of the last failure on the calling thread; "" after success. */
BA_API const char* ba_last_error(void);
BA_API const char* ba_status_name(ba_status status);
BA_API const char* ba_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
BA_API void ba_string_free(char* s);

/* Rule tables for neutralization and anonymization. NULL data_dir means the
 * compiled-in default. */
BA_API ba_status ba_rules_load(const char* data_dir, ba_rules** out);
BA_API void ba_rules_free(ba_rules* rules);
BA_API ba_status ba_neutralize(const ba_rules* rules, const char* text, char** out_text);
/* Masks detected person names with <PER>. */
BA_API ba_status ba_anonymize(const ba_rules* rules, const char* text, char** out_text);

BA_API ba_status ba_scorer_lexicon(const char* data_dir, ba_scorer** out);
BA_API ba_status ba_scorer_http(const char* endpoint, ba_scorer** out);
BA_API void ba_scorer_free(ba_scorer* scorer);
/* out_probs receives negative, neutral, positive, other. */
BA_API ba_status ba_score(const ba_scorer* scorer, const char* text, double out_probs[4]);

/* Shapley values of the whitespace tokens of `sentence` against p_negative.
 * samples 0 means the default (2000); it is ignored in exact mode. Writes
 * min(count, capacity) values; *out_count is always the token count. */
BA_API ba_status ba_shapley(const ba_scorer* scorer, const char* sentence, ba_shapley_mode mode, size_t samples,
                            uint64_t seed, double* out_phi, size_t capacity, size_t* out_count);

/* Pipeline settings are "key" / "value" strings, keys as listed by
 * ba_setting_info (run_dir, corpus, mode, seed, ...). */
BA_API size_t ba_setting_count(void);
BA_API ba_status ba_setting_info(size_t index, const char** key, const char** default_value, const char** help);

BA_API ba_status ba_pipeline_create(ba_pipeline** out);
BA_API ba_status ba_pipeline_set(ba_pipeline* p, const char* key, const char* value);
/* stage: neutralize, generate, analyze, attribute, debias or report. */
BA_API ba_status ba_pipeline_run(ba_pipeline* p, const char* stage);
BA_API void ba_pipeline_destroy(ba_pipeline* p);

#ifdef __cplusplus
}
#endif

#endif
