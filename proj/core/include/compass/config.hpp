#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "compass/backend.hpp"
#include "compass/clustering.hpp"
#include "compass/embedding.hpp"
#include "compass/memory.hpp"
#include "compass/pipeline.hpp"
#include "compass/taxonomy.hpp"

namespace compass::config {

enum class BackendMode { scripted, live };
enum class EmbedderMode { hash, live };
enum class ClockMode { logical, system };

struct BackendSettings {
  BackendMode mode = BackendMode::scripted;
  std::optional<std::filesystem::path> script;  // scripted mode
  backend::LiveBackendConfig live;
};

struct EmbedderSettings {
  EmbedderMode mode = EmbedderMode::hash;
  std::size_t dim = 64;
  embedding::LiveEmbedderConfig live;
};

struct MemorySettings {
  bool enabled = false;
  std::filesystem::path dir = "compass-memory";
  std::size_t k = memory::kDefaultRetrievalK;
  std::size_t budget_chars = memory::kDefaultBudgetChars;
  memory::PromotionRules promotion;
};

// One JSON document with sections backend, embedder, taxonomy, mapping,
// memory, clustering and pipeline; every field is optional. Relative paths
// resolve against the config file's directory.
struct CompassConfig {
  BackendSettings backend;
  EmbedderSettings embedder;
  std::optional<std::filesystem::path> taxonomy_path;
  std::optional<std::filesystem::path> mapping_path;
  MemorySettings memory;
  clustering::ClusterParams clustering;
  pipeline::PipelineConfig pipeline;
  ClockMode clock = ClockMode::logical;
};

// ConfigError for unknown keys, out-of-range values or missing files.
CompassConfig parse_config(std::string_view bytes, const std::filesystem::path& base_dir = ".");
CompassConfig load_config(const std::filesystem::path& path);

taxonomy::Taxonomy load_configured_taxonomy(const CompassConfig& config);
// Identity mapping when none is configured.
taxonomy::TaxonomyMapping load_configured_mapping(const CompassConfig& config, const taxonomy::Taxonomy& taxonomy);
std::unique_ptr<backend::ChatBackend> make_backend(const CompassConfig& config);
std::unique_ptr<embedding::Embedder> make_embedder(const CompassConfig& config);

}  // namespace compass::config
