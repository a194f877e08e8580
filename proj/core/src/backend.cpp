#include "compass/backend.hpp"

#include <semaphore>
#include <set>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "http_client.hpp"

namespace compass::backend {

using nlohmann::json;

std::string_view to_string(ResponseSchema schema) {
  switch (schema) {
    case ResponseSchema::plan: return "plan";
    case ResponseSchema::findings: return "findings";
    case ResponseSchema::themes: return "themes";
    case ResponseSchema::scores: return "scores";
    case ResponseSchema::summary: return "summary";
  }
  return "plan";
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::complete: return "complete";
    case FinishReason::length: return "length";
    case FinishReason::refusal: return "refusal";
    case FinishReason::transport_error: return "transport_error";
  }
  return "complete";
}

std::string ChatRequest::script_key() const { return stage + ":" + phase + ":" + trace_id; }

void ChatRequest::validate() const {
  if (user_text.empty()) throw InvariantError("chat request user_text is empty");
  if (!(temperature >= 0.0 && temperature <= 1.0)) throw InvariantError("temperature must lie in [0,1]");
  if (max_output_tokens < 1) throw InvariantError("max_output_tokens must be at least 1");
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(const std::map<std::string, std::string>& script) {
  for (const auto& [key, text] : script) add(key, text);
}

void ScriptedBackend::add(std::string key, std::string text) {
  auto [it, inserted] = script_.try_emplace(std::move(key), std::move(text));
  if (!inserted) throw ConfigError("duplicate script key '" + it->first + "'");
}

bool ScriptedBackend::contains(std::string_view key) const { return script_.find(key) != script_.end(); }

ChatResult ScriptedBackend::chat_complete(const ChatRequest& request) {
  request.validate();
  const auto key = request.script_key();
  auto it = script_.find(key);
  if (it == script_.end()) throw ScriptKeyError(key);
  return ChatResult{it->second, FinishReason::complete, 0};
}

std::map<std::string, std::string> parse_script(std::string_view bytes) {
  std::set<std::string> seen;
  std::string duplicate;
  auto on_event = [&](int depth, json::parse_event_t event, json& parsed) {
    if (depth == 1 && event == json::parse_event_t::key) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(bytes, on_event);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed script: ") + e.what(), e.byte);
  }
  if (!duplicate.empty()) throw ConfigError("duplicate script key '" + duplicate + "'");
  if (!doc.is_object()) throw ConfigError("script must be a JSON object of key -> text");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : doc.items()) {
    // Structured responses may be written inline as JSON; they are sent as text.
    out.emplace(key, value.is_string() ? value.get<std::string>() : value.dump());
  }
  return out;
}

std::unique_ptr<ScriptedBackend> scripted_backend(const std::map<std::string, std::string>& script) {
  return std::make_unique<ScriptedBackend>(script);
}

// ---------------------------------------------------------------------------

struct LiveBackend::Impl {
  LiveBackendConfig config;
  detail::Endpoint endpoint;
  std::string api_key;
  std::counting_semaphore<> in_flight;

  explicit Impl(LiveBackendConfig c)
      : config(std::move(c)),
        endpoint(detail::parse_endpoint(config.endpoint)),
        api_key(detail::resolve_api_key(config.api_key_env, config.require_api_key)),
        in_flight(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config.max_in_flight))) {
    if (config.model.empty()) throw ConfigError("live backend requires a model name");
  }
};

LiveBackend::LiveBackend(LiveBackendConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

LiveBackend::~LiveBackend() = default;

std::string LiveBackend::id() const { return "live:" + impl_->config.model; }

ChatResult LiveBackend::chat_complete(const ChatRequest& request) {
  request.validate();
  json payload = {
      {"model", impl_->config.model},
      {"messages",
       json::array({{{"role", "system"}, {"content", request.system_text}},
                    {{"role", "user"}, {"content", request.user_text}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };

  const auto started = std::chrono::steady_clock::now();
  impl_->in_flight.acquire();
  auto outcome = detail::post_json(impl_->endpoint, payload.dump(), impl_->api_key, impl_->config.timeout,
                                   impl_->config.retry);
  impl_->in_flight.release();
  ChatResult result;
  result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  if (!outcome.ok) {
    result.finish_reason = FinishReason::transport_error;
    return result;
  }

  try {
    const auto doc = json::parse(outcome.body);
    const auto& choice = doc.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    result.text = content.is_string() ? content.get<std::string>() : std::string{};
    const auto reason = choice.value("finish_reason", std::string("stop"));
    if (reason == "length") {
      result.finish_reason = FinishReason::length;
    } else if (reason == "content_filter" || reason == "refusal") {
      result.finish_reason = FinishReason::refusal;
    } else {
      result.finish_reason = result.text.empty() ? FinishReason::refusal : FinishReason::complete;
    }
  } catch (const json::exception&) {
    result.text.clear();
    result.finish_reason = FinishReason::transport_error;
  }
  return result;
}

}  // namespace compass::backend
