#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace hamrater {

// One backend-agnostic chat exchange. The tag identifies the originating
// (interview, instrument, item, attempt) for logging and mock scripting.
struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  std::string model_name;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;
};

struct CompletionResponse {
  std::string raw_text;
  long latency_ms = 0;
  int attempt = 1;  // which transport attempt produced this response
};

enum class BackendKind { HttpChat, ScriptedMock };

struct BackendConfig {
  BackendKind kind = BackendKind::ScriptedMock;
  std::optional<std::string> endpoint_url;     // required for HttpChat
  std::optional<std::string> api_key_env_var;  // bearer token source; never logged
  double timeout_s = 60.0;
  int max_retries = 2;
  std::optional<std::string> script_path;      // required for ScriptedMock
  std::optional<int> in_flight_cap;            // bounds concurrent HTTP requests

  void validate() const;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResponse complete(const CompletionRequest& req) = 0;
};

// Deterministic lookup by request_tag; "__default__" catches unscripted tags.
// Pure function of (script, tag): repeated calls are byte-identical.
class ScriptedMockBackend : public Backend {
 public:
  explicit ScriptedMockBackend(const std::string& script_path);
  static ScriptedMockBackend from_json_text(const std::string& json_text);
  CompletionResponse complete(const CompletionRequest& req) override;

 private:
  ScriptedMockBackend() = default;
  std::map<std::string, std::string> responses_;
  std::optional<std::string> default_response_;
};

// Exponential backoff: 1 s base, doubled per retry, +/-20% jitter.
long backoff_delay_ms(int retry_index, std::mt19937& rng);

using SleepFn = std::function<void(long ms)>;

// One chat-completion round trip against an OpenAI-compatible endpoint,
// retried on transport errors, timeouts, and 5xx. The API key travels only
// in the Authorization header, read from the configured environment variable.
class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig cfg, SleepFn sleep = {});
  CompletionResponse complete(const CompletionRequest& req) override;

  // Request body as sent on the wire (no credential fields by construction).
  static nlohmann::json build_request_body(const CompletionRequest& req);
  static std::string extract_content(const std::string& response_body);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg);

// One-shot convenience wrapper.
CompletionResponse complete(const BackendConfig& cfg, const CompletionRequest& req);

}  // namespace hamrater
