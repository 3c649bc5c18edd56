// bias_audit: command-line driver for the audit pipeline.
//
//   bias_audit neutralize --corpus bios.jsonl --run-dir runs/a
//   bias_audit generate   --run-dir runs/a --mode replay --cache-dir fixtures/
//   bias_audit analyze    --run-dir runs/a
//   ...
//
// Exit status: 0 ok, 1 error, 2 missing predecessor artifact, 3 config
// conflict with the run manifest.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biasaudit/biasaudit.h"

namespace {

const char* const kStages[] = {"neutralize", "generate", "analyze", "attribute", "debias", "report"};

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

int exit_code(ba_status s) {
  switch (s) {
    case BA_OK: return 0;
    case BA_ERR_MISSING_ARTIFACT: return 2;
    case BA_ERR_CONFIG_CONFLICT: return 3;
    default: return 1;
  }
}

struct Subcommand {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit LLM completions for identity-conditioned regard bias."};
  app.require_subcommand(1);

  std::vector<Subcommand> subs(std::size(kStages));
  for (std::size_t s = 0; s < std::size(kStages); ++s) {
    auto& sub = subs[s];
    sub.app = app.add_subcommand(kStages[s], std::string("run the ") + kStages[s] + " stage");
    for (std::size_t i = 0; i < ba_setting_count(); ++i) {
      const char* key = nullptr;
      const char* def = nullptr;
      const char* help = nullptr;
      ba_setting_info(i, &key, &def, &help);
      std::string description = help;
      if (*def) description += " [default: " + std::string(def) + "]";
      sub.options[key] = sub.app->add_option(flag_name(key), sub.values[key], description);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (std::size_t s = 0; s < subs.size(); ++s) {
    auto& sub = subs[s];
    if (!sub.app->parsed()) continue;

    ba_pipeline* pipeline = nullptr;
    ba_status status = ba_pipeline_create(&pipeline);
    for (const auto& [key, option] : sub.options) {
      if (status != BA_OK) break;
      if (option->count() > 0) status = ba_pipeline_set(pipeline, key.c_str(), sub.values[key].c_str());
    }
    if (status == BA_OK) status = ba_pipeline_run(pipeline, kStages[s]);
    if (status != BA_OK)
      std::fprintf(stderr, "bias_audit %s: %s: %s\n", kStages[s], ba_status_name(status), ba_last_error());
    ba_pipeline_destroy(pipeline);
    return exit_code(status);
  }
  return 1;
}
