#include "hamrater/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "hamrater/util.hpp"

namespace hamrater {

using nlohmann::json;

void BackendConfig::validate() const {
  if (kind == BackendKind::HttpChat && (!endpoint_url || endpoint_url->empty()))
    throw BackendError("backend config: HttpChat requires endpoint_url");
  if (kind == BackendKind::ScriptedMock && (!script_path || script_path->empty()))
    throw BackendError("backend config: ScriptedMock requires script_path");
  if (!(timeout_s > 0.0)) throw BackendError("backend config: timeout_s must be positive");
  if (max_retries < 0) throw BackendError("backend config: max_retries must be non-negative");
  if (in_flight_cap && *in_flight_cap < 1)
    throw BackendError("backend config: in_flight_cap must be >= 1 when set");
}

namespace {

void validate_request(const CompletionRequest& req) {
  if (req.system_text.empty() || req.user_text.empty())
    throw BackendError("completion request: system_text and user_text must be non-empty");
  if (req.temperature < 0.0)
    throw BackendError("completion request: temperature must be >= 0");
  if (req.max_output_tokens <= 0)
    throw BackendError("completion request: max_output_tokens must be positive");
}

std::map<std::string, std::string> parse_script(const std::string& json_text,
                                                std::optional<std::string>& default_response) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed mock script: ") + e.what());
  }
  if (!doc.is_object()) throw BackendError("mock script must be a JSON object of tag -> response");
  std::map<std::string, std::string> responses;
  for (const auto& [tag, value] : doc.items()) {
    if (!value.is_string())
      throw BackendError("mock script entry '" + tag + "' must be a string response");
    if (tag == "__default__") {
      default_response = value.get<std::string>();
    } else {
      responses[tag] = value.get<std::string>();
    }
  }
  return responses;
}

}  // namespace

ScriptedMockBackend::ScriptedMockBackend(const std::string& script_path) {
  responses_ = parse_script(util::read_file(script_path), default_response_);
}

ScriptedMockBackend ScriptedMockBackend::from_json_text(const std::string& json_text) {
  ScriptedMockBackend backend;
  backend.responses_ = parse_script(json_text, backend.default_response_);
  return backend;
}

CompletionResponse ScriptedMockBackend::complete(const CompletionRequest& req) {
  validate_request(req);
  auto it = responses_.find(req.request_tag);
  if (it != responses_.end()) return {it->second, 0, 1};
  if (default_response_) return {*default_response_, 0, 1};
  throw BackendError("mock script has no entry for tag '" + req.request_tag +
                     "' and no __default__");
}

long backoff_delay_ms(int retry_index, std::mt19937& rng) {
  const double base = 1000.0 * std::pow(2.0, static_cast<double>(retry_index));
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  return static_cast<long>(base * jitter(rng));
}

json HttpChatBackend::build_request_body(const CompletionRequest& req) {
  return json{{"model", req.model_name},
              {"messages", json::array({json{{"role", "system"}, {"content", req.system_text}},
                                        json{{"role", "user"}, {"content", req.user_text}}})},
              {"temperature", req.temperature},
              {"max_tokens", req.max_output_tokens}};
}

std::string HttpChatBackend::extract_content(const std::string& response_body) {
  json doc;
  try {
    doc = json::parse(response_body);
  } catch (const json::exception& e) {
    throw BackendError(std::string("chat completion response is not JSON: ") + e.what());
  }
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw BackendError("chat completion response lacks choices[0].message.content");
  }
}

struct HttpChatBackend::Impl {
  BackendConfig cfg;
  std::string base;         // scheme://host[:port]
  std::string path;         // [prefix]/chat/completions
  SleepFn sleep;
  std::mutex rng_mutex;
  std::mt19937 rng{std::random_device{}()};
  std::unique_ptr<std::counting_semaphore<>> gate;  // in-flight cap, optional

  long next_delay(int retry_index) {
    std::lock_guard<std::mutex> lock(rng_mutex);
    return backoff_delay_ms(retry_index, rng);
  }
};

HttpChatBackend::HttpChatBackend(BackendConfig cfg, SleepFn sleep) : impl_(new Impl) {
  cfg.validate();
  if (cfg.kind != BackendKind::HttpChat)
    throw BackendError("HttpChatBackend requires kind = HttpChat");
  impl_->cfg = cfg;
  impl_->sleep = sleep ? std::move(sleep)
                       : [](long ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };

  const std::string& url = *cfg.endpoint_url;
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  impl_->base = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  impl_->path = prefix + "/chat/completions";

  if (cfg.in_flight_cap)
    impl_->gate = std::make_unique<std::counting_semaphore<>>(*cfg.in_flight_cap);
}

CompletionResponse HttpChatBackend::complete(const CompletionRequest& req) {
  validate_request(req);
  const std::string body = build_request_body(req).dump();
  httplib::Headers headers;
  if (impl_->cfg.api_key_env_var && !impl_->cfg.api_key_env_var->empty()) {
    const char* key = std::getenv(impl_->cfg.api_key_env_var->c_str());
    if (key != nullptr && key[0] != '\0')
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  struct GateGuard {
    std::counting_semaphore<>* gate;
    explicit GateGuard(std::counting_semaphore<>* g) : gate(g) {
      if (gate) gate->acquire();
    }
    ~GateGuard() {
      if (gate) gate->release();
    }
  };

  const int total_attempts = impl_->cfg.max_retries + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= total_attempts; ++attempt) {
    if (attempt > 1) impl_->sleep(impl_->next_delay(attempt - 2));

    long elapsed = 0;
    httplib::Result result = [&] {
      GateGuard guard(impl_->gate.get());
      const auto start = std::chrono::steady_clock::now();
      httplib::Client client(impl_->base);
      const auto timeout = std::chrono::duration<double>(impl_->cfg.timeout_s);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Result r = client.Post(impl_->path, headers, body, "application/json");
      elapsed = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::steady_clock::now() - start)
                                      .count());
      return r;
    }();

    if (!result) {
      last_error = "transport error (" + httplib::to_string(result.error()) + ") for tag '" +
                   req.request_tag + "'";
      continue;  // retryable
    }
    if (result->status >= 500) {
      last_error = "server status " + std::to_string(result->status) + " for tag '" +
                   req.request_tag + "'";
      continue;  // retryable
    }
    if (result->status < 200 || result->status >= 300) {
      throw BackendError("terminal status " + std::to_string(result->status) + " for tag '" +
                         req.request_tag + "': " + result->body);
    }
    CompletionResponse response;
    response.raw_text = extract_content(result->body);
    response.latency_ms = elapsed;
    response.attempt = attempt;
    return response;
  }
  throw BackendError("retries exhausted after " + std::to_string(total_attempts) +
                     " attempt(s); last error: " + last_error);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == BackendKind::ScriptedMock)
    return std::make_unique<ScriptedMockBackend>(*cfg.script_path);
  return std::make_unique<HttpChatBackend>(cfg);
}

CompletionResponse complete(const BackendConfig& cfg, const CompletionRequest& req) {
  return make_backend(cfg)->complete(req);
}

}  // namespace hamrater
