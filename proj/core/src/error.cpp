#include "compass/error.hpp"

namespace compass {
namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ", ";
    out += item;
  }
  return out;
}

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t byte_offset)
    : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), byte_offset_(byte_offset) {}

SchemaError::SchemaError(const std::string& what, std::string field, std::ptrdiff_t record_index)
    : Error(record_index >= 0 ? "record " + std::to_string(record_index) + ": " + what : what),
      field_(std::move(field)),
      record_index_(record_index) {}

UnknownErrorTypeError::UnknownErrorTypeError(const std::string& query,
                                             std::vector<std::string> suggestions)
    : Error("unknown error type '" + query + "'; closest: " + join(suggestions)),
      suggestions_(std::move(suggestions)) {}

AmbiguousErrorTypeError::AmbiguousErrorTypeError(const std::string& query,
                                                 std::vector<std::string> candidates)
    : Error("ambiguous error type '" + query + "'; use a full path: " + join(candidates)),
      candidates_(std::move(candidates)) {}

UnmappedLeafError::UnmappedLeafError(std::vector<std::string> leaves)
    : Error("taxonomy leaves without an external mapping: " + join(leaves)),
      leaves_(std::move(leaves)) {}

ScriptKeyError::ScriptKeyError(std::string key)
    : Error("no scripted response for key '" + key + "'"), key_(std::move(key)) {}

}  // namespace compass
