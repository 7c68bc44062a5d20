#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "dlava/http_backend.hpp"
#include "httplib.h"
#include "test_util.hpp"

namespace dlava::model {
namespace {

using testing::error_kind;

const char* kReply = R"({"choices":[{"message":{"content":"{\"answer\":\"ok\"}"}}],"usage":{"prompt_tokens":5,"completion_tokens":2}})";

class Server {
 public:
  explicit Server(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Server() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ModelRequest request() {
  ModelRequest req;
  req.user_parts.push_back(TextPart{"hello"});
  return req;
}

HttpConfig config(const std::string& endpoint, std::vector<std::chrono::milliseconds>* sleeps) {
  HttpConfig cfg;
  cfg.endpoint = endpoint;
  cfg.api_key = "secret";
  cfg.timeout = std::chrono::seconds(5);
  cfg.sleep = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(d); };
  return cfg;
}

TEST(Http, RetriesRateLimitThenSucceeds) {
  std::atomic<int> hits{0};
  std::string auth;
  Server server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    if (hits++ < 2) {
      res.status = 429;
      return;
    }
    res.set_content(kReply, "application/json");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  HttpBackend backend(config(server.endpoint(), &sleeps));
  const auto out = backend.complete(request());
  EXPECT_EQ(out.raw_text, "{\"answer\":\"ok\"}");
  ASSERT_TRUE(out.token_usage);
  EXPECT_EQ(out.token_usage->prompt_tokens, 5);
  EXPECT_EQ(HttpBackend::last_attempts(), 3);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(sleeps.size(), 2u);
  for (std::size_t i = 0; i < sleeps.size(); ++i) EXPECT_LE(sleeps[i].count(), 1000 * (1 << i));
  EXPECT_EQ(auth, "Bearer secret");
}

TEST(Http, ServerErrorsExhaustAttempts) {
  std::atomic<int> hits{0};
  Server server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  std::vector<std::chrono::milliseconds> sleeps;
  HttpBackend backend(config(server.endpoint(), &sleeps));
  EXPECT_EQ(error_kind([&] { backend.complete(request()); }), ErrorKind::kTransport);
  EXPECT_EQ(hits.load(), 5);
  EXPECT_EQ(HttpBackend::last_attempts(), 5);
}

TEST(Http, UnreachableEndpointIsTransportError) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  std::vector<std::chrono::milliseconds> sleeps;
  auto cfg = config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", &sleeps);
  cfg.timeout = std::chrono::seconds(1);
  HttpBackend backend(cfg);
  EXPECT_EQ(error_kind([&] { backend.complete(request()); }), ErrorKind::kTransport);
  EXPECT_EQ(HttpBackend::last_attempts(), 5);
  EXPECT_EQ(sleeps.size(), 4u);
}

TEST(Http, ClientErrorIsProtocolErrorWithoutRetry) {
  std::atomic<int> hits{0};
  Server server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content("bad request body", "text/plain");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  HttpBackend backend(config(server.endpoint(), &sleeps));
  try {
    backend.complete(request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kProtocol);
    EXPECT_NE(std::string(e.what()).find("bad request body"), std::string::npos);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(Http, ResponseParsing) {
  EXPECT_EQ(parse_chat_response(kReply, "x").raw_text, "{\"answer\":\"ok\"}");
  const auto parts = parse_chat_response(
      R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})", "x");
  EXPECT_EQ(parts.raw_text, "ab");
  EXPECT_EQ(error_kind([] { parse_chat_response("not json", "x"); }), ErrorKind::kProtocol);
  EXPECT_EQ(error_kind([] { parse_chat_response(R"({"choices":[]})", "x"); }), ErrorKind::kProtocol);
}

TEST(Http, EnvOverrides) {
  setenv("MODEL_ENDPOINT", "http://example.invalid/v1/chat/completions", 1);
  setenv("MODEL_ID", "other-model", 1);
  const auto cfg = http_config_from_env();
  EXPECT_EQ(cfg.endpoint, "http://example.invalid/v1/chat/completions");
  EXPECT_EQ(cfg.model_id, "other-model");
  unsetenv("MODEL_ENDPOINT");
  unsetenv("MODEL_ID");
}

TEST(Limiter, BoundsInFlight) {
  RequestLimiter limiter(2, 0);
  std::atomic<int> active{0}, peak{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      limiter.acquire();
      const int now = ++active;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      limiter.release();
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
}

}  // namespace
}  // namespace dlava::model
