#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace compass::taxonomy {

struct SubcategoryNode {
  std::string name;
  std::vector<std::string> error_types;

  bool operator==(const SubcategoryNode&) const = default;
};

struct CategoryNode {
  std::string name;
  std::vector<SubcategoryNode> subcategories;

  bool operator==(const CategoryNode&) const = default;
};

// A validated leaf: `Category/Subcategory/ErrorType`.
struct ErrorTypeId {
  std::string path;
  std::string category;
  std::string subcategory;
  std::string leaf;

  bool operator==(const ErrorTypeId&) const = default;
  auto operator<=>(const ErrorTypeId& other) const { return path <=> other.path; }
};

// Three-level error taxonomy: category -> subcategory -> error type.
class Taxonomy {
 public:
  Taxonomy(std::string version, std::vector<CategoryNode> categories);

  const std::string& version() const { return version_; }
  const std::vector<CategoryNode>& categories() const { return categories_; }
  // Leaves in declaration order.
  const std::vector<ErrorTypeId>& leaves() const { return leaves_; }

  const ErrorTypeId* find_path(std::string_view path) const;

  bool operator==(const Taxonomy& other) const {
    return version_ == other.version_ && categories_ == other.categories_;
  }

 private:
  std::string version_;
  std::vector<CategoryNode> categories_;
  std::vector<ErrorTypeId> leaves_;
  std::map<std::string, std::size_t, std::less<>> by_path_;
};

// Built-in taxonomy with the five top-level categories.
const Taxonomy& default_taxonomy();

// Empty or whitespace-only config yields the built-in taxonomy.
// Config errors: duplicate leaf path, depth other than three, '/' in a name.
Taxonomy load_taxonomy(std::string_view config_bytes);

// Exact path, else case-insensitive leaf name. Throws UnknownErrorTypeError
// (with the three nearest leaf names) or AmbiguousErrorTypeError.
ErrorTypeId resolve_error_type(const Taxonomy& taxonomy, std::string_view path_or_fuzzy);

// Many-to-one map from internal leaves onto an external benchmark's labels.
class TaxonomyMapping {
 public:
  TaxonomyMapping(std::map<std::string, std::string> entries, std::set<std::string> external_labels,
                  std::optional<std::string> default_label, const Taxonomy& taxonomy);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::set<std::string>& external_labels() const { return external_labels_; }
  const std::optional<std::string>& default_label() const { return default_label_; }
  // Leaves with neither an entry nor a default to fall back on.
  const std::vector<std::string>& unmapped_leaves() const { return unmapped_; }
  bool is_total() const { return unmapped_.empty(); }

  // Throws UnmappedLeafError listing every unmapped leaf.
  void require_total() const;

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> external_labels_;
  std::optional<std::string> default_label_;
  std::vector<std::string> unmapped_;
};

// {external_labels:[...], default_label?, entries:{leaf_path: label}}
TaxonomyMapping load_mapping(std::string_view config_bytes, const Taxonomy& taxonomy);

// Identity mapping: every leaf maps to its own path.
TaxonomyMapping identity_mapping(const Taxonomy& taxonomy);

std::string map_to_external(const TaxonomyMapping& mapping, const ErrorTypeId& id);

}  // namespace compass::taxonomy
