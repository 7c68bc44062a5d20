#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <string>

#include "dlava/model_client.hpp"

namespace dlava::model {

struct HttpConfig {
  // Full URL of the chat-completions endpoint, e.g.
  // http://localhost:8000/v1/chat/completions
  std::string endpoint;
  std::string api_key;
  std::string model_id = "pixtral-12b";
  std::int32_t max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double backoff_factor = 2.0;
  std::int32_t max_in_flight = 4;
  // Requests per rolling minute; 0 means unlimited.
  std::int32_t per_minute_budget = 0;
  std::chrono::seconds timeout{120};
  std::uint64_t jitter_seed = 0;
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// MODEL_ENDPOINT, MODEL_API_KEY and MODEL_ID, layered over `base`.
HttpConfig http_config_from_env(HttpConfig base = {});

// Bounds in-flight requests and, optionally, requests per minute.
class RequestLimiter {
 public:
  RequestLimiter(std::int32_t max_in_flight, std::int32_t per_minute_budget);
  void acquire();
  void release();

 private:
  std::int32_t max_in_flight_;
  std::int32_t per_minute_budget_;
  std::int32_t in_flight_ = 0;
  std::deque<std::chrono::steady_clock::time_point> recent_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

// POSTs request_body() to the endpoint and returns the first choice's text.
// Transport failures, 429 and 5xx are retried with full-jitter exponential
// backoff up to max_attempts, after which a transport error is raised. Other
// statuses and malformed bodies are protocol errors carrying a body excerpt.
class HttpBackend : public ModelBackend {
 public:
  explicit HttpBackend(HttpConfig config);

  std::string backend_id() const override;
  ModelResponse complete(const ModelRequest& req) override;

  // Attempts made by the most recent complete() on this thread.
  static std::int32_t last_attempts();

 private:
  std::chrono::milliseconds backoff_delay(std::int32_t attempt);

  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  RequestLimiter limiter_;
  std::mutex jitter_mutex_;
  std::uint64_t jitter_counter_ = 0;
};

// Reads choices[0].message.content (string or list of text parts) and usage.
ModelResponse parse_chat_response(const std::string& body, const std::string& backend_id);

}  // namespace dlava::model
