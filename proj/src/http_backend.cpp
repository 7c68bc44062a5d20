#include "dlava/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "dlava/error.hpp"
#include "dlava/json_io.hpp"
#include "dlava/rng.hpp"
#include "httplib.h"

namespace dlava::model {

HttpConfig http_config_from_env(HttpConfig base) {
  if (const char* v = std::getenv("MODEL_ENDPOINT"); v && *v) base.endpoint = v;
  if (const char* v = std::getenv("MODEL_API_KEY"); v && *v) base.api_key = v;
  if (const char* v = std::getenv("MODEL_ID"); v && *v) base.model_id = v;
  return base;
}

RequestLimiter::RequestLimiter(std::int32_t max_in_flight, std::int32_t per_minute_budget)
    : max_in_flight_(std::max(1, max_in_flight)), per_minute_budget_(std::max(0, per_minute_budget)) {}

void RequestLimiter::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    while (!recent_.empty() && now - recent_.front() >= std::chrono::minutes(1)) recent_.pop_front();
    const bool slot = in_flight_ < max_in_flight_;
    const bool budget = per_minute_budget_ == 0 || static_cast<std::int32_t>(recent_.size()) < per_minute_budget_;
    if (slot && budget) break;
    if (!budget) {
      cv_.wait_until(lock, recent_.front() + std::chrono::minutes(1));
    } else {
      cv_.wait(lock);
    }
  }
  ++in_flight_;
  if (per_minute_budget_ > 0) recent_.push_back(std::chrono::steady_clock::now());
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_one();
}

namespace {

thread_local std::int32_t t_last_attempts = 0;

std::string excerpt(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

}  // namespace

std::int32_t HttpBackend::last_attempts() { return t_last_attempts; }

HttpBackend::HttpBackend(HttpConfig config)
    : config_(std::move(config)), limiter_(config_.max_in_flight, config_.per_minute_budget) {
  if (config_.endpoint.empty()) fail(ErrorKind::kUsage, "HTTP model backend needs an endpoint (MODEL_ENDPOINT)");
  if (config_.max_attempts < 1) fail(ErrorKind::kUsage, "max_attempts must be at least 1");
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::kUsage, "endpoint must be an absolute URL: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string HttpBackend::backend_id() const { return "http:" + config_.endpoint + "#" + config_.model_id; }

std::chrono::milliseconds HttpBackend::backoff_delay(std::int32_t attempt) {
  const double cap = static_cast<double>(config_.base_delay.count()) * std::pow(config_.backoff_factor, attempt);
  std::lock_guard lock(jitter_mutex_);
  Rng rng(Rng::mix(config_.jitter_seed) ^ Rng::mix(++jitter_counter_));
  return std::chrono::milliseconds(static_cast<std::int64_t>(rng.uniform01() * cap));
}

ModelResponse parse_chat_response(const std::string& body, const std::string& backend_id) {
  json_io::Json j;
  try {
    j = json_io::Json::parse(body);
  } catch (const std::exception&) {
    fail(ErrorKind::kProtocol, "response is not JSON: " + excerpt(body));
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    fail(ErrorKind::kProtocol, "response has no choices: " + excerpt(body));
  }
  const auto& choice = j["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    fail(ErrorKind::kProtocol, "first choice has no message: " + excerpt(body));
  }
  const auto& content = choice["message"].value("content", json_io::Json());
  ModelResponse out;
  out.backend_id = backend_id;
  if (content.is_string()) {
    out.raw_text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
        out.raw_text += part["text"].get<std::string>();
      }
    }
  } else {
    fail(ErrorKind::kProtocol, "message content is neither text nor parts: " + excerpt(body));
  }
  if (j.contains("usage") && j["usage"].is_object()) {
    TokenUsage usage;
    usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
    usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    out.token_usage = usage;
  }
  return out;
}

ModelResponse HttpBackend::complete(const ModelRequest& req) {
  validate(req);
  auto payload = req;
  if (payload.model_id.empty()) payload.model_id = config_.model_id;
  const auto body = request_body(payload);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_problem;
  for (std::int32_t attempt = 0; attempt < config_.max_attempts; ++attempt) {
    t_last_attempts = attempt + 1;
    if (attempt > 0) config_.sleep(backoff_delay(attempt - 1));
    limiter_.acquire();
    const auto started = std::chrono::steady_clock::now();
    httplib::Result result{nullptr, httplib::Error::Unknown};
    try {
      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      result = client.Post(path_, headers, body, "application/json");
    } catch (...) {
      limiter_.release();
      throw;
    }
    limiter_.release();
    const auto latency =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    if (!result) {
      last_problem = "transport failure: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
      last_problem = "HTTP " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      fail(ErrorKind::kProtocol, "HTTP " + std::to_string(status) + " from model endpoint: " + excerpt(result->body));
    }
    auto out = parse_chat_response(result->body, backend_id());
    out.latency_ms = latency;
    return out;
  }
  fail(ErrorKind::kTransport, "model endpoint failed after " + std::to_string(config_.max_attempts) +
                                  " attempts; last problem: " + last_problem);
}

}  // namespace dlava::model
