#include "biasaudit/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/parallel.hpp"

namespace biasaudit::llm {

namespace fs = std::filesystem;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Live: return "live";
    case Mode::Record: return "record";
    case Mode::Replay: return "replay";
  }
  return "";
}

Mode mode_from_string(std::string_view s) {
  if (s == "live") return Mode::Live;
  if (s == "record") return Mode::Record;
  if (s == "replay") return Mode::Replay;
  fail(ErrorCode::InvalidArgument, "unknown LLM mode '" + std::string(s) + "' (live|record|replay)");
}

void LlmParams::validate() const {
  if (model.empty()) fail(ErrorCode::InvalidArgument, "LLM model name is empty");
  if (!(temperature >= 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (max_tokens < 1 || max_tokens > 4096) fail(ErrorCode::InvalidArgument, "max_tokens must be in 1..4096");
}

std::string prompt_hash(const LlmParams& params, std::string_view prompt) {
  char temp[64];
  std::snprintf(temp, sizeof temp, "%.6f", params.temperature);
  std::string canonical;
  canonical.reserve(prompt.size() + params.model.size() + 64);
  canonical += "model=" + params.model + "\n";
  canonical += "temperature=" + std::string(temp) + "\n";
  canonical += "max_tokens=" + std::to_string(params.max_tokens) + "\n";
  canonical += "prompt=";
  canonical += prompt;
  return io::sha256_hex(canonical);
}

LlmClient::LlmClient(LlmParams params, ClientOptions options)
    : params_(std::move(params)),
      options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.max_in_flight, 1, 1024))) {
  params_.validate();
  if (options_.retry.max_attempts < 1) fail(ErrorCode::InvalidArgument, "retry max_attempts must be >= 1");
  if (options_.mode == Mode::Replay) {
    if (options_.cache_dir.empty() || !fs::is_directory(options_.cache_dir))
      fail(ErrorCode::InvalidArgument, "replay mode needs an existing fixture directory, got '" +
                                           options_.cache_dir.string() + "'");
    return;
  }
  if (options_.mode == Mode::Record && options_.cache_dir.empty())
    fail(ErrorCode::InvalidArgument, "record mode needs a cache directory");
  const char* key = std::getenv(options_.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    fail(ErrorCode::InvalidArgument, std::string(to_string(options_.mode)) + " mode needs an API key in $" +
                                         options_.api_key_env);
  api_key_ = key;
  if (!options_.transport) options_.transport = http::make_http_transport();
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

fs::path LlmClient::cache_path(const std::string& hash) const { return options_.cache_dir / (hash + ".txt"); }

std::size_t LlmClient::upstream_calls() const {
  std::lock_guard lock(mutex_);
  return upstream_calls_;
}

std::string LlmClient::call_upstream(std::string_view prompt) {
  nlohmann::json body = {{"model", params_.model},
                         {"prompt", std::string(prompt)},
                         {"temperature", params_.temperature},
                         {"max_tokens", params_.max_tokens}};
  std::string url = params_.endpoint;
  while (!url.empty() && url.back() == '/') url.pop_back();
  url += url.ends_with("/v1") ? "/completions" : "/v1/completions";
  const http::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  const auto payload = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    http::Response res;
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      {
        std::lock_guard lock(mutex_);
        ++upstream_calls_;
      }
      res = options_.transport->post(url, headers, payload);
    }

    if (res.status == 200) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Backend, std::string("completion response is not JSON: ") + e.what());
      }
      const auto& choices = parsed.value("choices", nlohmann::json::array());
      if (!choices.is_array() || choices.empty() || !choices[0].contains("text") || !choices[0]["text"].is_string())
        fail(ErrorCode::Backend, "completion response has no choices[0].text");
      auto text = choices[0]["text"].get<std::string>();
      if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        fail(ErrorCode::Backend, "completion endpoint returned empty text");
      return text;
    }

    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    last_error = res.status == 0 ? "transport error: " + res.error : "HTTP " + std::to_string(res.status);
    if (!retryable) fail(ErrorCode::Backend, "completion request failed: " + last_error + ": " + res.body);
    if (attempt < options_.retry.max_attempts) {
      const auto wait = options_.retry.base.count() * std::pow(options_.retry.factor, attempt - 1);
      options_.sleep(std::chrono::milliseconds(static_cast<long long>(wait)));
    }
  }
  fail(ErrorCode::Network, "completion request failed after " + std::to_string(options_.retry.max_attempts) +
                               " attempts: " + last_error);
}

LlmClient::Completion LlmClient::complete_text(std::string_view prompt) {
  Completion out;
  out.hash = prompt_hash(params_, prompt);

  if (options_.mode == Mode::Replay) {
    const auto path = cache_path(out.hash);
    if (!fs::exists(path)) throw MissingFixture(out.hash);
    out.text = io::read_file(path);
    out.from_cache = true;
    return out;
  }

  std::promise<std::string> promise;
  std::shared_future<std::string> shared;
  bool leader = false;
  {
    std::lock_guard lock(mutex_);
    if (options_.mode == Mode::Record) {
      const auto path = cache_path(out.hash);
      if (fs::exists(path)) {
        out.text = io::read_file(path);
        out.from_cache = true;
        return out;
      }
    }
    if (auto it = pending_.find(out.hash); it != pending_.end()) {
      shared = it->second;
    } else {
      shared = promise.get_future().share();
      pending_.emplace(out.hash, shared);
      leader = true;
    }
  }

  if (!leader) {
    out.text = shared.get();
    out.from_cache = true;
    return out;
  }

  try {
    auto text = call_upstream(prompt);
    if (options_.mode == Mode::Record) io::write_file_atomic(cache_path(out.hash), text);
    promise.set_value(text);
    out.text = std::move(text);
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    pending_.erase(out.hash);
    throw;
  }
  std::lock_guard lock(mutex_);
  pending_.erase(out.hash);
  return out;
}

Generation LlmClient::complete(const promptgen::Prompt& prompt) {
  auto c = complete_text(prompt.text);
  Generation g;
  g.bio_id = prompt.bio_id;
  g.identity = prompt.identity;
  g.prompt_hash = std::move(c.hash);
  g.text = std::move(c.text);
  g.from_cache = c.from_cache;
  return g;
}

std::vector<Generation> LlmClient::complete_batch(std::span<const promptgen::Prompt> prompts) {
  std::vector<Generation> out(prompts.size());
  parallel_for(prompts.size(), options_.max_in_flight, [&](std::size_t i) { out[i] = complete(prompts[i]); });
  return out;
}

}  // namespace biasaudit::llm
