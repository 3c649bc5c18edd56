#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "biasaudit/io.hpp"
#include "biasaudit/pipeline.hpp"
#include "test_support.hpp"

namespace fixture {

inline constexpr biasaudit::pipeline::Stage kAllStages[] = {
    biasaudit::pipeline::Stage::Neutralize, biasaudit::pipeline::Stage::Generate,
    biasaudit::pipeline::Stage::Analyze,    biasaudit::pipeline::Stage::Attribute,
    biasaudit::pipeline::Stage::Debias,     biasaudit::pipeline::Stage::Report};

/// Offline settings for the shipped replay fixtures.
inline biasaudit::pipeline::Settings replay_settings(const std::filesystem::path& run_dir) {
  const auto e2e = testing::fixtures_dir() / "e2e";
  return {{"run_dir", run_dir.string()},
          {"corpus", (e2e / "corpus.jsonl").string()},
          {"data_dir", testing::data_dir().string()},
          {"mode", "replay"},
          {"cache_dir", (e2e / "replay").string()}};
}

inline void run_replay(const std::filesystem::path& run_dir) {
  const auto settings = replay_settings(run_dir);
  for (auto stage : kAllStages) biasaudit::pipeline::Pipeline(settings).run(stage);
}

/// Relative path -> contents of every CSV under `dir`.
inline std::map<std::string, std::string> csv_files(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
    if (entry.path().extension() == ".csv")
      out[std::filesystem::relative(entry.path(), dir).string()] = biasaudit::io::read_file(entry.path());
  return out;
}

}  // namespace fixture
