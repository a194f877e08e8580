#include "compass/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::taxonomy {

using nlohmann::json;

Taxonomy::Taxonomy(std::string version, std::vector<CategoryNode> categories)
    : version_(std::move(version)), categories_(std::move(categories)) {
  for (const auto& cat : categories_) {
    if (cat.subcategories.empty()) {
      throw ConfigError("category '" + cat.name + "' has no subcategories; taxonomy depth must be 3");
    }
    for (const auto& sub : cat.subcategories) {
      if (sub.error_types.empty()) {
        throw ConfigError("subcategory '" + cat.name + "/" + sub.name +
                          "' has no error types; taxonomy depth must be 3");
      }
      for (const auto& leaf : sub.error_types) {
        for (const auto* name : {&cat.name, &sub.name, &leaf}) {
          if (name->empty() || name->find('/') != std::string::npos) {
            throw ConfigError("taxonomy names must be non-empty and free of '/': '" + *name + "'");
          }
        }
        ErrorTypeId id{cat.name + "/" + sub.name + "/" + leaf, cat.name, sub.name, leaf};
        if (by_path_.contains(id.path)) throw ConfigError("duplicate error type path '" + id.path + "'");
        by_path_.emplace(id.path, leaves_.size());
        leaves_.push_back(std::move(id));
      }
    }
  }
}

const ErrorTypeId* Taxonomy::find_path(std::string_view path) const {
  auto it = by_path_.find(path);
  return it == by_path_.end() ? nullptr : &leaves_[it->second];
}

const Taxonomy& default_taxonomy() {
  // Leaf inventory reconstructed from the category descriptions and the
  // error names used in published trace analyses. Extend via a config file.
  static const Taxonomy kDefault(
      "compass-default-1",
      {
          {"Thinking & Response Issues",
           {
               {"Hallucination", {"Hallucinated Content", "Hallucinated Tool Result"}},
               {"Information Processing",
                {"Poor Information Retrieval", "Misinterpretation of Retrieved Information"}},
               {"Decision Making", {"Flawed Decision Making", "Tool Selection Error"}},
               {"Output Generation", {"Output Format Violation", "Instruction Non-compliance"}},
           }},
          {"Safety & Security Risks",
           {
               {"Data Protection", {"PII Leakage", "Credential Exposure", "Data Exposure"}},
               {"Content Safety", {"Unsafe Content", "Biased Content"}},
           }},
          {"Tool & System Failures",
           {
               {"Tool Execution", {"API Failure", "Invalid Tool Params", "Rate Limit"}},
               {"Runtime Environment", {"Runtime Exception", "Misconfiguration"}},
           }},
          {"Workflow & Task Gaps",
           {
               {"Context Management", {"Context Loss"}},
               {"Task Management", {"Goal Drift", "Redundant Action", "Task Orchestration Failure"}},
           }},
          {"Reflection Gaps",
           {
               {"Planning", {"Lack of Self-Correction", "Missing ReAct Planning"}},
           }},
      });
  return kDefault;
}

namespace {

json parse_config(std::string_view bytes, const char* what) {
  try {
    return json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed ") + what + ": " + e.what(), e.byte);
  }
}

bool blank(std::string_view bytes) {
  return std::all_of(bytes.begin(), bytes.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string string_field(const json& obj, const char* field, const char* context) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw ConfigError(std::string(context) + " requires string field '" + field + "'");
  }
  return it->get<std::string>();
}

}  // namespace

Taxonomy load_taxonomy(std::string_view config_bytes) {
  if (blank(config_bytes)) return default_taxonomy();
  const auto doc = parse_config(config_bytes, "taxonomy config");
  if (!doc.is_object()) throw ConfigError("taxonomy config must be a JSON object");
  std::string version = doc.value("version", std::string("custom"));
  auto cats = doc.find("categories");
  if (cats == doc.end() || !cats->is_array()) throw ConfigError("taxonomy config requires a 'categories' array");

  std::vector<CategoryNode> categories;
  for (const auto& cat : *cats) {
    if (!cat.is_object()) throw ConfigError("category entries must be objects");
    CategoryNode node{string_field(cat, "name", "category"), {}};
    auto subs = cat.find("subcategories");
    if (subs == cat.end() || !subs->is_array()) {
      throw ConfigError("category '" + node.name + "' has no subcategories; taxonomy depth must be 3");
    }
    for (const auto& sub : *subs) {
      if (!sub.is_object()) throw ConfigError("subcategory entries must be objects");
      SubcategoryNode subnode{string_field(sub, "name", "subcategory"), {}};
      auto types = sub.find("error_types");
      if (types == sub.end() || !types->is_array()) {
        throw ConfigError("subcategory '" + subnode.name + "' has no error_types; taxonomy depth must be 3");
      }
      for (const auto& leaf : *types) {
        if (!leaf.is_string()) {
          throw ConfigError("error_types of '" + subnode.name +
                            "' must be strings; taxonomy depth must be exactly 3");
        }
        subnode.error_types.push_back(leaf.get<std::string>());
      }
      node.subcategories.push_back(std::move(subnode));
    }
    categories.push_back(std::move(node));
  }
  return Taxonomy(std::move(version), std::move(categories));
}

ErrorTypeId resolve_error_type(const Taxonomy& taxonomy, std::string_view path_or_fuzzy) {
  if (const auto* exact = taxonomy.find_path(path_or_fuzzy)) return *exact;

  const std::string query = util::ascii_lower(util::collapse_spaces(path_or_fuzzy));
  std::vector<const ErrorTypeId*> matches;
  for (const auto& leaf : taxonomy.leaves()) {
    if (util::ascii_lower(leaf.leaf) == query) matches.push_back(&leaf);
  }
  if (matches.size() == 1) return *matches.front();
  if (matches.size() > 1) {
    std::vector<std::string> candidates;
    for (const auto* m : matches) candidates.push_back(m->path);
    throw AmbiguousErrorTypeError(std::string(path_or_fuzzy), std::move(candidates));
  }

  // Rank distinct leaf names by edit distance normalized by the longer length.
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& leaf : taxonomy.leaves()) {
    if (std::any_of(ranked.begin(), ranked.end(), [&](const auto& r) { return r.second == leaf.leaf; })) {
      continue;
    }
    const std::string name = util::ascii_lower(leaf.leaf);
    const double longest = static_cast<double>(std::max<std::size_t>({name.size(), query.size(), 1}));
    ranked.emplace_back(static_cast<double>(util::edit_distance(query, name)) / longest, leaf.leaf);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> suggestions;
  for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) suggestions.push_back(ranked[i].second);
  throw UnknownErrorTypeError(std::string(path_or_fuzzy), std::move(suggestions));
}

TaxonomyMapping::TaxonomyMapping(std::map<std::string, std::string> entries,
                                 std::set<std::string> external_labels,
                                 std::optional<std::string> default_label, const Taxonomy& taxonomy)
    : entries_(std::move(entries)),
      external_labels_(std::move(external_labels)),
      default_label_(std::move(default_label)) {
  for (const auto& [path, label] : entries_) {
    if (!taxonomy.find_path(path)) throw ConfigError("mapping entry for unknown leaf '" + path + "'");
    if (!external_labels_.contains(label)) {
      throw ConfigError("mapping label '" + label + "' is not among external_labels");
    }
  }
  if (default_label_ && !external_labels_.contains(*default_label_)) {
    throw ConfigError("default_label '" + *default_label_ + "' is not among external_labels");
  }
  if (!default_label_) {
    for (const auto& leaf : taxonomy.leaves()) {
      if (!entries_.contains(leaf.path)) unmapped_.push_back(leaf.path);
    }
  }
}

void TaxonomyMapping::require_total() const {
  if (!unmapped_.empty()) throw UnmappedLeafError(unmapped_);
}

TaxonomyMapping load_mapping(std::string_view config_bytes, const Taxonomy& taxonomy) {
  const auto doc = parse_config(config_bytes, "mapping config");
  if (!doc.is_object()) throw ConfigError("mapping config must be a JSON object");

  std::set<std::string> labels;
  auto ext = doc.find("external_labels");
  if (ext == doc.end() || !ext->is_array()) throw ConfigError("mapping config requires 'external_labels'");
  for (const auto& label : *ext) {
    if (!label.is_string()) throw ConfigError("external_labels must be strings");
    labels.insert(label.get<std::string>());
  }

  std::optional<std::string> fallback;
  if (auto d = doc.find("default_label"); d != doc.end() && !d->is_null()) {
    if (!d->is_string()) throw ConfigError("default_label must be a string");
    fallback = d->get<std::string>();
  }

  std::map<std::string, std::string> entries;
  if (auto e = doc.find("entries"); e != doc.end() && !e->is_null()) {
    if (!e->is_object()) throw ConfigError("mapping 'entries' must be an object");
    for (const auto& [path, label] : e->items()) {
      if (!label.is_string()) throw ConfigError("mapping label for '" + path + "' must be a string");
      entries.emplace(path, label.get<std::string>());
    }
  }
  return TaxonomyMapping(std::move(entries), std::move(labels), std::move(fallback), taxonomy);
}

TaxonomyMapping identity_mapping(const Taxonomy& taxonomy) {
  std::map<std::string, std::string> entries;
  std::set<std::string> labels;
  for (const auto& leaf : taxonomy.leaves()) {
    entries.emplace(leaf.path, leaf.path);
    labels.insert(leaf.path);
  }
  return TaxonomyMapping(std::move(entries), std::move(labels), std::nullopt, taxonomy);
}

std::string map_to_external(const TaxonomyMapping& mapping, const ErrorTypeId& id) {
  if (auto it = mapping.entries().find(id.path); it != mapping.entries().end()) return it->second;
  if (mapping.default_label()) return *mapping.default_label();
  auto unmapped = mapping.unmapped_leaves();
  if (std::find(unmapped.begin(), unmapped.end(), id.path) == unmapped.end()) unmapped.push_back(id.path);
  throw UnmappedLeafError(std::move(unmapped));
}

}  // namespace compass::taxonomy
