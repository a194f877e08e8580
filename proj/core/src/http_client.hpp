#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include "compass/backend.hpp"

namespace compass::detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

// ConfigError unless `url` is http(s)://host[:port][/path].
Endpoint parse_endpoint(std::string_view url);

// Reads the key from the environment; ConfigError when required and unset.
std::string resolve_api_key(const std::string& env_var, bool required);

struct HttpOutcome {
  bool ok = false;
  int status = 0;
  int attempts = 0;
  std::string body;
  std::string error;
};

// POST with exponential backoff between failed attempts. Any non-2xx
// status or transport failure counts as a failed attempt.
HttpOutcome post_json(const Endpoint& endpoint, const std::string& body, const std::string& bearer,
                      std::chrono::seconds timeout, const backend::RetryPolicy& retry);

}  // namespace compass::detail
