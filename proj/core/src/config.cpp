#include "compass/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::config {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.is_null()) {
      doc_ = json::object();
    } else if (!doc.is_object()) {
      throw ConfigError("config section '" + name_ + "' must be an object");
    } else {
      doc_ = doc;
    }
  }

  // Rejects keys nobody asked for, to catch typos.
  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() || it->is_null() ? nullptr : &*it;
  }

  std::optional<std::string> text(const std::string& key) {
    const auto* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
    return v->get<std::string>();
  }

  std::optional<double> number(const std::string& key, double lo, double hi) {
    const auto* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
    const double x = v->get<double>();
    if (x < lo || x > hi) {
      throw ConfigError(where(key) + " must be in [" + util::format_fixed(lo, 3) + ", " + util::format_fixed(hi, 3) + "]");
    }
    return x;
  }

  std::optional<std::int64_t> integer(const std::string& key, std::int64_t lo, std::int64_t hi) {
    const auto* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    const auto x = v->get<std::int64_t>();
    if (x < lo || x > hi) {
      throw ConfigError(where(key) + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) throw ConfigError(where(key) + " must be a boolean");
    return v->get<bool>();
  }

  Section sub(const std::string& key) {
    const auto* v = get(key);
    return Section(v ? *v : json(nullptr), name_.empty() ? key : name_ + "." + key);
  }

 private:
  std::string where(const std::string& key) const { return "config key '" + (name_.empty() ? key : name_ + "." + key) + "'"; }

  std::string name_;
  json doc_;
  std::set<std::string> seen_;
};

std::filesystem::path existing_file(const std::filesystem::path& base, const std::string& path, const char* what) {
  std::filesystem::path p(path);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
  return p;
}

template <typename T>
void set(T& target, const std::optional<std::int64_t>& v) {
  if (v) target = static_cast<T>(*v);
}

}  // namespace

CompassConfig parse_config(std::string_view bytes, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  Section root(doc, "");
  CompassConfig cfg;

  {
    auto s = root.sub("backend");
    const auto mode = s.text("mode").value_or("scripted");
    if (mode == "scripted") {
      cfg.backend.mode = BackendMode::scripted;
    } else if (mode == "live") {
      cfg.backend.mode = BackendMode::live;
    } else {
      throw ConfigError("backend.mode must be 'scripted' or 'live'");
    }
    if (auto p = s.text("script")) cfg.backend.script = existing_file(base_dir, *p, "backend script");
    auto& live = cfg.backend.live;
    if (auto v = s.text("endpoint")) live.endpoint = *v;
    if (auto v = s.text("model")) live.model = *v;
    if (auto v = s.text("api_key_env")) live.api_key_env = *v;
    if (auto v = s.boolean("require_api_key")) live.require_api_key = *v;
    if (auto v = s.integer("timeout_s", 1, 3600)) live.timeout = std::chrono::seconds(*v);
    set(live.max_in_flight, s.integer("max_in_flight", 1, 256));
    set(live.retry.max_attempts, s.integer("max_attempts", 1, 10));
    if (auto v = s.integer("retry_base_ms", 0, 60000)) live.retry.base_delay = std::chrono::milliseconds(*v);
    s.finish();
    if (cfg.backend.mode == BackendMode::live && (live.endpoint.empty() || live.model.empty())) {
      throw ConfigError("live backend requires backend.endpoint and backend.model");
    }
  }
  {
    auto s = root.sub("embedder");
    const auto mode = s.text("mode").value_or("hash");
    if (mode == "hash") {
      cfg.embedder.mode = EmbedderMode::hash;
    } else if (mode == "live") {
      cfg.embedder.mode = EmbedderMode::live;
    } else {
      throw ConfigError("embedder.mode must be 'hash' or 'live'");
    }
    set(cfg.embedder.dim, s.integer("dim", static_cast<std::int64_t>(embedding::kMinHashDim), 1 << 20));
    auto& live = cfg.embedder.live;
    if (auto v = s.text("endpoint")) live.endpoint = *v;
    if (auto v = s.text("model")) live.model = *v;
    if (auto v = s.text("api_key_env")) live.api_key_env = *v;
    if (auto v = s.boolean("require_api_key")) live.require_api_key = *v;
    if (auto v = s.integer("timeout_s", 1, 3600)) live.timeout = std::chrono::seconds(*v);
    live.dim = cfg.embedder.dim;
    s.finish();
    if (cfg.embedder.mode == EmbedderMode::live && (live.endpoint.empty() || live.model.empty())) {
      throw ConfigError("live embedder requires embedder.endpoint and embedder.model");
    }
  }
  if (auto p = root.text("taxonomy")) cfg.taxonomy_path = existing_file(base_dir, *p, "taxonomy");
  if (auto p = root.text("mapping")) cfg.mapping_path = existing_file(base_dir, *p, "mapping");
  {
    auto s = root.sub("memory");
    if (auto v = s.boolean("enabled")) cfg.memory.enabled = *v;
    if (auto v = s.text("dir")) {
      std::filesystem::path p(*v);
      cfg.memory.dir = p.is_relative() ? base_dir / p : p;
    } else {
      cfg.memory.dir = base_dir / cfg.memory.dir;
    }
    set(cfg.memory.k, s.integer("k", 0, 1000));
    set(cfg.memory.budget_chars, s.integer("budget_chars", 0, 1'000'000));
    set(cfg.memory.promotion.min_support, s.integer("min_support", 1, 1'000'000));
    if (auto v = s.number("min_confidence", 0.0, 1.0)) cfg.memory.promotion.min_confidence = *v;
    s.finish();
  }
  {
    auto s = root.sub("clustering");
    set(cfg.clustering.min_cluster_size, s.integer("min_cluster_size", 2, 1'000'000));
    set(cfg.clustering.min_samples, s.integer("min_samples", 1, 1'000'000));
    if (auto v = s.number("soft_threshold", 0.0, 1.0)) cfg.clustering.soft_threshold = *v;
    if (auto v = s.number("softmax_temperature", 0.0, 1e6)) cfg.clustering.softmax_temperature = *v;
    s.finish();
    cfg.clustering.validate();
  }
  {
    auto s = root.sub("pipeline");
    auto& p = cfg.pipeline;
    set(p.truncation_limit, s.integer("truncation_limit", static_cast<std::int64_t>(trace::kMinTruncationLimit), 1'000'000));
    if (auto v = s.number("plan_temperature", 0.0, 1.0)) p.plan_temperature = *v;
    if (auto v = s.number("execute_temperature", 0.0, 1.0)) p.execute_temperature = *v;
    set(p.max_output_tokens, s.integer("max_output_tokens", 1, 1'000'000));
    if (auto v = s.text("clock")) {
      if (*v == "logical") {
        cfg.clock = ClockMode::logical;
      } else if (*v == "system") {
        cfg.clock = ClockMode::system;
      } else {
        throw ConfigError("pipeline.clock must be 'logical' or 'system'");
      }
    }
    auto pol = s.sub("priority");
    if (auto v = pol.number("critical_penalty", 0.0, 1.0)) p.policy.critical_penalty = *v;
    if (auto v = pol.number("high_penalty", 0.0, 1.0)) p.policy.high_penalty = *v;
    if (auto v = pol.number("penalty_floor", 0.0, 1.0)) p.policy.penalty_floor = *v;
    if (auto v = pol.number("critical_below", 0.0, 1.0)) p.policy.critical_below = *v;
    if (auto v = pol.number("high_below", 0.0, 1.0)) p.policy.high_below = *v;
    if (auto v = pol.number("medium_below", 0.0, 1.0)) p.policy.medium_below = *v;
    pol.finish();
    if (!(p.policy.critical_below <= p.policy.high_below && p.policy.high_below <= p.policy.medium_below)) {
      throw ConfigError("priority thresholds must satisfy critical_below <= high_below <= medium_below");
    }
    auto w = s.sub("weights");
    for (auto dim : pipeline::kDimensions) {
      if (auto v = w.number(std::string(pipeline::to_string(dim)), 0.0, 1e6)) p.policy.weights[dim] = *v;
    }
    w.finish();
    s.finish();
  }
  root.finish();

  cfg.pipeline.memory_enabled = cfg.memory.enabled;
  cfg.pipeline.memory_k = cfg.memory.k;
  cfg.pipeline.memory_budget_chars = cfg.memory.budget_chars;
  if (cfg.clock == ClockMode::system) cfg.pipeline.make_clock = [] { return pipeline::system_clock(); };
  return cfg;
}

CompassConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(util::read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

taxonomy::Taxonomy load_configured_taxonomy(const CompassConfig& config) {
  if (!config.taxonomy_path) return taxonomy::default_taxonomy();
  return taxonomy::load_taxonomy(util::read_file(*config.taxonomy_path));
}

taxonomy::TaxonomyMapping load_configured_mapping(const CompassConfig& config, const taxonomy::Taxonomy& taxonomy) {
  if (!config.mapping_path) return taxonomy::identity_mapping(taxonomy);
  auto mapping = taxonomy::load_mapping(util::read_file(*config.mapping_path), taxonomy);
  mapping.require_total();
  return mapping;
}

std::unique_ptr<backend::ChatBackend> make_backend(const CompassConfig& config) {
  if (config.backend.mode == BackendMode::live) return std::make_unique<backend::LiveBackend>(config.backend.live);
  if (!config.backend.script) return std::make_unique<backend::ScriptedBackend>();
  return backend::scripted_backend(backend::parse_script(util::read_file(*config.backend.script)));
}

std::unique_ptr<embedding::Embedder> make_embedder(const CompassConfig& config) {
  if (config.embedder.mode == EmbedderMode::live) return std::make_unique<embedding::LiveEmbedder>(config.embedder.live);
  return std::make_unique<embedding::HashEmbedder>(config.embedder.dim);
}

}  // namespace compass::config
