#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "biasaudit/transport.hpp"

namespace biasaudit::pipeline {

enum class Stage { Neutralize, Generate, Analyze, Attribute, Debias, Report };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// Flat key -> value settings, as given on the command line.
using Settings = std::map<std::string, std::string>;

enum class SettingKind { Text, Path, Integer, Real, Choice, Identities };

struct SettingInfo {
  std::string_view key;
  SettingKind kind;
  std::string_view default_value;
  std::string_view help;
  /// Semantic settings change results: they are frozen in the manifest when
  /// the run is created and hashed into its digest. The rest (paths,
  /// endpoints, replay mode, parallelism) may differ between invocations.
  bool semantic;
  /// '|'-separated allowed values for Choice settings.
  std::string_view choices = {};
};

/// Validates `value` for `key` and returns its canonical spelling, so that
/// "0.50" and "0.5" compare equal against the manifest.
std::string canonical_setting(std::string_view key, std::string_view value);

std::span<const SettingInfo> known_settings();

/// $BIASAUDIT_DATA_DIR if set, else the data directory of the source tree.
std::string default_data_dir();

/// Injection points for tests and fixture recording.
struct Hooks {
  std::shared_ptr<http::Transport> llm_transport;
  std::shared_ptr<http::Transport> regard_transport;
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Runs one stage against a run directory laid out as
///   manifest, neutral.jsonl, prompts.jsonl, generations.jsonl,
///   analysis/*.csv, attribution.jsonl, debias.jsonl, report/*
/// Missing predecessor artifacts raise MissingArtifact; a semantic setting
/// that disagrees with the manifest raises ConfigConflict.
class Pipeline {
public:
  explicit Pipeline(Settings explicit_settings, Hooks hooks = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void run(Stage stage);

  const nlohmann::json& manifest() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace biasaudit::pipeline
