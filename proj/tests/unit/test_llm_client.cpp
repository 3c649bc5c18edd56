#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "biasaudit/error.hpp"
#include "biasaudit/io.hpp"
#include "biasaudit/llm_client.hpp"
#include "fake_transport.hpp"
#include "test_support.hpp"

using namespace biasaudit;
using namespace biasaudit::llm;
using testing::FakeTransport;

namespace {

http::Response completion_reply(const std::string& text) {
  return {200, nlohmann::json{{"choices", {{{"text", text}}}}}.dump(), ""};
}

ClientOptions options_with(std::shared_ptr<http::Transport> t, Mode mode, const std::filesystem::path& dir,
                           std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  ::setenv("BIASAUDIT_TEST_KEY", "sk-test", 1);
  ClientOptions o;
  o.mode = mode;
  o.cache_dir = dir;
  o.api_key_env = "BIASAUDIT_TEST_KEY";
  o.transport = std::move(t);
  o.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  };
  return o;
}

}  // namespace

TEST_CASE("prompt hash is the SHA-256 of the canonical description") {
  LlmParams p;
  CHECK(prompt_hash(p, "Hello") == "1cc90e105ca70fb1a8f216418cb87d7057df8861a3004a7d38b30ed67ed90a3a");
  LlmParams q = p;
  q.temperature = 0.70000001;  // below the 6-decimal rendering
  CHECK(prompt_hash(q, "Hello") == prompt_hash(p, "Hello"));
  q.max_tokens = 64;
  CHECK(prompt_hash(q, "Hello") != prompt_hash(p, "Hello"));
}

TEST_CASE("params validation") {
  LlmParams p;
  p.max_tokens = 4097;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.model.clear();
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.temperature = -0.1;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("replay mode") {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return completion_reply("network!"); });
  ::unsetenv("BIASAUDIT_NO_SUCH_KEY");
  auto opts = options_with(t, Mode::Replay, dir.path());
  opts.api_key_env = "BIASAUDIT_NO_SUCH_KEY";  // replay needs no key
  LlmClient client(LlmParams{}, opts);

  const std::string prompt = "B Write two more lines.";
  const auto hash = prompt_hash(LlmParams{}, prompt);
  io::write_file_atomic(dir / (hash + ".txt"), "Recorded text.");

  const auto c = client.complete_text(prompt);
  CHECK(c.text == "Recorded text.");
  CHECK(c.from_cache);

  try {
    client.complete_text("unrecorded");
    FAIL("expected MissingFixture");
  } catch (const MissingFixture& e) {
    CHECK(e.hash() == prompt_hash(LlmParams{}, "unrecorded"));
    CHECK(std::string(e.what()).find(e.hash()) != std::string::npos);
  }
  CHECK(t->posts == 0);
  CHECK(t->gets == 0);
  CHECK(client.upstream_calls() == 0);

  opts.cache_dir = dir / "absent";
  CHECK_THROWS_AS(LlmClient(LlmParams{}, opts), Error);
}

TEST_CASE("record mode persists and reuses completions") {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return completion_reply(" Two more lines."); });
  LlmClient client(LlmParams{}, options_with(t, Mode::Record, dir.path()));

  const auto first = client.complete_text("P");
  const auto second = client.complete_text("P");
  CHECK(t->posts == 1);
  CHECK_FALSE(first.from_cache);
  CHECK(second.from_cache);
  CHECK(second.text == " Two more lines.");
  CHECK(io::read_file(dir / (first.hash + ".txt")) == " Two more lines.");

  const auto req = nlohmann::json::parse(t->bodies.at(0));
  CHECK(req["model"] == "gpt-3.5-turbo-instruct");
  CHECK(req["prompt"] == "P");
  CHECK(req["max_tokens"] == 128);
  CHECK(req["temperature"].get<double>() == doctest::Approx(0.7));
  CHECK(t->urls.at(0) == "https://api.openai.com/v1/completions");
  REQUIRE(t->last_headers.size() == 1);
  CHECK(t->last_headers[0].second == "Bearer sk-test");
}

TEST_CASE("live and record modes require the API key variable") {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return completion_reply("x"); });
  auto opts = options_with(t, Mode::Live, dir.path());
  opts.api_key_env = "BIASAUDIT_NO_SUCH_KEY";
  ::unsetenv("BIASAUDIT_NO_SUCH_KEY");
  CHECK_THROWS_AS(LlmClient(LlmParams{}, opts), Error);
  opts.mode = Mode::Record;
  CHECK_THROWS_AS(LlmClient(LlmParams{}, opts), Error);
}

TEST_CASE("retry with exponential backoff") {
  testing::TempDir dir;

  SUBCASE("429 twice then success") {
    std::atomic<int> n{0};
    auto t = std::make_shared<FakeTransport>([&](auto&, auto&) -> http::Response {
      if (n++ < 2) return {429, "slow down", ""};
      return completion_reply("ok");
    });
    std::vector<std::chrono::milliseconds> sleeps;
    LlmClient client(LlmParams{}, options_with(t, Mode::Live, dir.path(), &sleeps));
    CHECK(client.complete_text("P").text == "ok");
    CHECK(t->posts == 3);
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(1000),
                                                           std::chrono::milliseconds(2000)});
  }
  SUBCASE("persistent 503 gives up after five attempts") {
    auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return http::Response{503, "", ""}; });
    std::vector<std::chrono::milliseconds> sleeps;
    LlmClient client(LlmParams{}, options_with(t, Mode::Live, dir.path(), &sleeps));
    try {
      client.complete_text("P");
      FAIL("expected a network error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Network);
    }
    CHECK(t->posts == 5);
    REQUIRE(sleeps.size() == 4);
    CHECK(sleeps[3] == std::chrono::milliseconds(8000));
  }
  SUBCASE("transport failures are retried too") {
    std::atomic<int> n{0};
    auto t = std::make_shared<FakeTransport>([&](auto&, auto&) -> http::Response {
      if (n++ == 0) return {0, "", "connection refused"};
      return completion_reply("ok");
    });
    LlmClient client(LlmParams{}, options_with(t, Mode::Live, dir.path()));
    CHECK(client.complete_text("P").text == "ok");
  }
  SUBCASE("client errors are not retried") {
    auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return http::Response{401, "bad key", ""}; });
    LlmClient client(LlmParams{}, options_with(t, Mode::Live, dir.path()));
    CHECK_THROWS_AS(client.complete_text("P"), Error);
    CHECK(t->posts == 1);
  }
  SUBCASE("malformed or empty completions are backend errors") {
    auto t = std::make_shared<FakeTransport>([](auto&, auto&) { return http::Response{200, "{\"choices\":[]}", ""}; });
    LlmClient client(LlmParams{}, options_with(t, Mode::Live, dir.path()));
    CHECK_THROWS_AS(client.complete_text("P"), Error);
    auto blank = std::make_shared<FakeTransport>([](auto&, auto&) { return completion_reply("  \n"); });
    LlmClient client2(LlmParams{}, options_with(blank, Mode::Live, dir.path()));
    CHECK_THROWS_AS(client2.complete_text("P"), Error);
  }
}

TEST_CASE("concurrent duplicate prompts share one upstream call") {
  testing::TempDir dir;
  auto t = std::make_shared<FakeTransport>([](auto&, auto&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    return completion_reply("shared");
  });
  LlmClient client(LlmParams{}, options_with(t, Mode::Record, dir.path()));
  std::vector<std::thread> threads;
  std::vector<std::string> results(6);
  for (int i = 0; i < 6; ++i) threads.emplace_back([&, i] { results[i] = client.complete_text("same").text; });
  for (auto& th : threads) th.join();
  CHECK(t->posts == 1);
  for (const auto& r : results) CHECK(r == "shared");
}

TEST_CASE("in-flight requests are bounded") {
  testing::TempDir dir;
  std::atomic<int> active{0}, peak{0};
  auto t = std::make_shared<FakeTransport>([&](auto&, const std::string& body) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --active;
    return completion_reply(nlohmann::json::parse(body)["prompt"].get<std::string>() + "!");
  });
  auto opts = options_with(t, Mode::Live, dir.path());
  opts.max_in_flight = 2;
  LlmClient client(LlmParams{}, opts);
  std::vector<promptgen::Prompt> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back({"b" + std::to_string(i), promptgen::Identity::Control, "p" + std::to_string(i)});
  const auto gens = client.complete_batch(prompts);
  CHECK(peak.load() <= 2);
  CHECK(t->posts == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(gens[i].bio_id == "b" + std::to_string(i));
    CHECK(gens[i].text == "p" + std::to_string(i) + "!");
  }
}

TEST_CASE("live client over real HTTP") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      return;
    }
    CHECK(req.get_header_value("Authorization") == "Bearer sk-test");
    const auto body = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"choices", {{{"text", "echo: " + body["prompt"].get<std::string>()}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  testing::TempDir dir;
  LlmParams params;
  params.endpoint = "http://127.0.0.1:" + std::to_string(port);
  auto opts = options_with(nullptr, Mode::Live, dir.path());
  opts.transport = http::make_http_transport(std::chrono::seconds(5));
  LlmClient client(params, opts);
  CHECK(client.complete_text("hi").text == "echo: hi");
  CHECK(hits == 2);

  server.stop();
  th.join();
}

TEST_CASE("url joining") {
  CHECK(http::join_url("http://h:1/", "/v1/regard") == "http://h:1/v1/regard");
  CHECK(http::join_url("http://h:1", "healthz") == "http://h:1/healthz");
}
