#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace compass::backend {

// Which structured JSON document a request expects back.
enum class ResponseSchema { plan, findings, themes, scores, summary };

std::string_view to_string(ResponseSchema schema);

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.2;
  int max_output_tokens = 2048;
  ResponseSchema response_schema = ResponseSchema::plan;

  // Routing metadata. Scripted backends key responses on
  // `<stage>:<phase>:<trace_id>`.
  std::string stage;
  std::string phase;
  std::string trace_id;

  std::string script_key() const;
  // Throws InvariantError on empty user_text, temperature outside [0,1] or
  // max_output_tokens < 1.
  void validate() const;
};

enum class FinishReason { complete, length, refusal, transport_error };

std::string_view to_string(FinishReason reason);

struct ChatResult {
  std::string text;
  FinishReason finish_reason = FinishReason::complete;
  std::int64_t latency_ms = 0;
};

// Implementations must allow concurrent chat_complete calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResult chat_complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Canned responses keyed by ChatRequest::script_key(). Deterministic.
class ScriptedBackend final : public ChatBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(const std::map<std::string, std::string>& script);

  // ConfigError if the key is already present.
  void add(std::string key, std::string text);
  bool contains(std::string_view key) const;
  std::size_t size() const { return script_.size(); }

  // Throws ScriptKeyError when the request's key has no entry.
  ChatResult chat_complete(const ChatRequest& request) override;
  std::string id() const override { return "scripted"; }

 private:
  std::map<std::string, std::string, std::less<>> script_;
};

// JSON object of key -> response text. Duplicate keys are a ConfigError.
std::map<std::string, std::string> parse_script(std::string_view bytes);

std::unique_ptr<ScriptedBackend> scripted_backend(const std::map<std::string, std::string>& script);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
};

struct LiveBackendConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  std::string api_key_env = "COMPASS_API_KEY";
  // Unauthenticated endpoints (local gateways) skip the key check.
  bool require_api_key = true;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
};

// OpenAI-style chat completions over HTTP. Transport failures never throw:
// after the retry budget the result carries FinishReason::transport_error.
class LiveBackend final : public ChatBackend {
 public:
  // ConfigError if the endpoint is malformed or the API key is missing.
  explicit LiveBackend(LiveBackendConfig config);
  ~LiveBackend() override;

  ChatResult chat_complete(const ChatRequest& request) override;
  std::string id() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace compass::backend
