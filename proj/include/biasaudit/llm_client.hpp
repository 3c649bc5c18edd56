#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasaudit/promptgen.hpp"
#include "biasaudit/transport.hpp"

namespace biasaudit::llm {

enum class Mode { Live, Record, Replay };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct LlmParams {
  std::string model = "gpt-3.5-turbo-instruct";
  double temperature = 0.7;
  int max_tokens = 128;
  std::string endpoint = "https://api.openai.com";

  void validate() const;
};

struct Generation {
  std::string bio_id;
  promptgen::Identity identity = promptgen::Identity::Control;
  std::string prompt_hash;
  std::string text;
  bool from_cache = false;
};

/// Backoff schedule for HTTP 429, 5xx and transport failures: attempt k
/// (1-based) that fails waits base * factor^(k-1) before the next one.
struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  int max_attempts = 5;
};

struct ClientOptions {
  Mode mode = Mode::Replay;
  /// Fixture directory in replay mode, cache directory in record mode.
  std::filesystem::path cache_dir;
  std::string api_key_env = "OPENAI_API_KEY";
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  /// Defaults to the cpp-httplib transport when null.
  std::shared_ptr<http::Transport> transport;
  /// Defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// SHA-256 (lowercase hex) of the canonical request description
///   "model=<model>\ntemperature=<%.6f>\nmax_tokens=<n>\nprompt=<text>"
/// The fixture/cache file for a prompt is "<hash>.txt".
std::string prompt_hash(const LlmParams& params, std::string_view prompt);

/// OpenAI-compatible text completion client with a per-hash disk cache.
///
/// live   - every call goes upstream, nothing is cached.
/// record - cache hit returns the stored text; a miss goes upstream and is
///          persisted (temp file + rename) before returning.
/// replay - cache lookup only; a miss throws MissingFixture. No network.
///
/// Concurrent callers asking for the same hash share one upstream request.
class LlmClient {
public:
  LlmClient(LlmParams params, ClientOptions options);
  LlmClient(const LlmClient&) = delete;
  LlmClient& operator=(const LlmClient&) = delete;

  struct Completion {
    std::string hash;
    std::string text;
    bool from_cache = false;
  };

  Completion complete_text(std::string_view prompt);
  Generation complete(const promptgen::Prompt& prompt);
  /// Completes all prompts with at most max_in_flight concurrent requests;
  /// results are aligned with the input.
  std::vector<Generation> complete_batch(std::span<const promptgen::Prompt> prompts);

  const LlmParams& params() const noexcept { return params_; }
  Mode mode() const noexcept { return options_.mode; }
  std::size_t upstream_calls() const;

private:
  std::string call_upstream(std::string_view prompt);
  std::filesystem::path cache_path(const std::string& hash) const;

  LlmParams params_;
  ClientOptions options_;
  std::string api_key_;
  std::counting_semaphore<1024> in_flight_;

  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> pending_;
  std::size_t upstream_calls_ = 0;
};

}  // namespace biasaudit::llm
