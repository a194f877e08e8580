#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "compass/backend.hpp"

namespace compass::embedding {

struct Vector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  bool operator==(const Vector&) const = default;
};

double dot(const Vector& a, const Vector& b);
double cosine(const Vector& a, const Vector& b);
double euclidean(const Vector& a, const Vector& b);

// Scales to unit L2 norm. ZeroVectorError for an all-zero input.
Vector normalized(std::vector<double> values);

inline constexpr std::size_t kMinHashDim = 8;

// Deterministic feature-hashing embedder. Lowercases ASCII, splits on
// anything that is not an ASCII letter/digit (bytes >= 0x80 stay inside
// tokens), adds +/-1 per token at bucket fnv1a64(token) % dim with the sign
// taken from the low bit of fnv1a64(token, kSignBasis), then L2-normalizes.
Vector hash_embed(std::string_view text, std::size_t dim);

inline constexpr std::uint64_t kSignBasis = 0x84222325cbf29ce4ULL;

class Embedder {
 public:
  virtual ~Embedder() = default;
  // Unit-norm vector of dim(). EmbeddingUnavailableError on transport failure.
  virtual Vector embed(std::string_view text) = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 64);
  Vector embed(std::string_view text) override;
  std::size_t dim() const override { return dim_; }
  std::string id() const override;

 private:
  std::size_t dim_;
};

struct LiveEmbedderConfig {
  std::string endpoint;
  std::string model;
  std::size_t dim = 0;
  std::string api_key_env = "COMPASS_API_KEY";
  bool require_api_key = true;
  std::chrono::seconds timeout{60};
  backend::RetryPolicy retry;
};

// POSTs {model, input} and reads data[0].embedding.
class LiveEmbedder final : public Embedder {
 public:
  explicit LiveEmbedder(LiveEmbedderConfig config);
  Vector embed(std::string_view text) override;
  std::size_t dim() const override { return config_.dim; }
  std::string id() const override { return "live:" + config_.model; }

 private:
  LiveEmbedderConfig config_;
  std::string api_key_;
};

}  // namespace compass::embedding
