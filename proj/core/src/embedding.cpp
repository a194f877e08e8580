#include "compass/embedding.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"
#include "http_client.hpp"

namespace compass::embedding {

double Vector::norm() const { return std::sqrt(dot(*this, *this)); }

double dot(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) throw InvariantError("vector dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) sum += a.values[i] * b.values[i];
  return sum;
}

double cosine(const Vector& a, const Vector& b) {
  const double denom = a.norm() * b.norm();
  return denom == 0.0 ? 0.0 : dot(a, b) / denom;
}

double euclidean(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) throw InvariantError("vector dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

Vector normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (sq == 0.0) throw ZeroVectorError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
  return Vector{std::move(values)};
}

namespace {

bool token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace

Vector hash_embed(std::string_view text, std::size_t dim) {
  if (dim < kMinHashDim) throw InvariantError("hash embedding dim must be at least 8");
  std::vector<double> acc(dim, 0.0);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !token_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (begin == i) continue;
    const std::string token = util::ascii_lower(text.substr(begin, i - begin));
    const std::size_t bucket = util::fnv1a64(token) % dim;
    const double sign = (util::fnv1a64(token, kSignBasis) & 1U) ? -1.0 : 1.0;
    acc[bucket] += sign;
  }
  try {
    return normalized(std::move(acc));
  } catch (const ZeroVectorError&) {
    throw ZeroVectorError("text has no tokens to embed");
  }
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim < kMinHashDim) throw ConfigError("hash embedding dim must be at least 8");
}

Vector HashEmbedder::embed(std::string_view text) { return hash_embed(text, dim_); }

std::string HashEmbedder::id() const { return "hash:" + std::to_string(dim_); }

LiveEmbedder::LiveEmbedder(LiveEmbedderConfig config) : config_(std::move(config)) {
  detail::parse_endpoint(config_.endpoint);
  if (config_.dim == 0) throw ConfigError("live embedder requires a positive dim");
  api_key_ = detail::resolve_api_key(config_.api_key_env, config_.require_api_key);
}

Vector LiveEmbedder::embed(std::string_view text) {
  if (text.empty()) throw InvariantError("cannot embed empty text");
  const nlohmann::json payload = {{"model", config_.model}, {"input", std::string(text)}};
  auto outcome = detail::post_json(detail::parse_endpoint(config_.endpoint), payload.dump(), api_key_,
                                   config_.timeout, config_.retry);
  if (!outcome.ok) throw EmbeddingUnavailableError("embedding endpoint failed: " + outcome.error);
  std::vector<double> values;
  try {
    values = nlohmann::json::parse(outcome.body).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingUnavailableError(std::string("malformed embedding response: ") + e.what());
  }
  if (values.size() != config_.dim) {
    throw EmbeddingUnavailableError("embedding has dim " + std::to_string(values.size()) + ", expected " +
                                    std::to_string(config_.dim));
  }
  try {
    return normalized(std::move(values));
  } catch (const ZeroVectorError&) {
    throw EmbeddingUnavailableError("endpoint returned a zero embedding");
  }
}

}  // namespace compass::embedding
