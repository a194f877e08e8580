#include "http_client.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "compass/error.hpp"

namespace compass::detail {

Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint must be an http(s) URL: " + std::string(url));
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported endpoint scheme: " + std::string(url));
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("https endpoints need a build with OpenSSL");
#endif
  const auto host_begin = scheme_end + 3;
  const auto path_begin = url.find('/', host_begin);
  Endpoint ep;
  ep.origin = std::string(url.substr(0, path_begin));
  ep.path = path_begin == std::string_view::npos ? "/" : std::string(url.substr(path_begin));
  if (ep.origin.size() <= host_begin) throw ConfigError("endpoint has no host: " + std::string(url));
  return ep;
}

std::string resolve_api_key(const std::string& env_var, bool required) {
  const char* value = env_var.empty() ? nullptr : std::getenv(env_var.c_str());
  if (value && *value) return value;
  if (required) throw ConfigError("API key environment variable " + env_var + " is not set");
  return {};
}

HttpOutcome post_json(const Endpoint& endpoint, const std::string& body, const std::string& bearer,
                      std::chrono::seconds timeout, const backend::RetryPolicy& retry) {
  HttpOutcome outcome;
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    outcome.attempts = attempt;
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) {
      outcome.ok = true;
      outcome.status = res->status;
      outcome.body = res->body;
      outcome.error.clear();
      return outcome;
    }
    if (res) {
      outcome.status = res->status;
      outcome.error = "HTTP " + std::to_string(res->status);
    } else {
      outcome.status = 0;
      outcome.error = httplib::to_string(res.error());
    }
    if (attempt < retry.max_attempts) {
      const double scale = std::pow(retry.factor, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::milliseconds>(
          retry.base_delay * scale));
    }
  }
  return outcome;
}

}  // namespace compass::detail
