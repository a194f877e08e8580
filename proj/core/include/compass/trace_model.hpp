#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace compass::trace {

enum class SpanKind { agent, llm, tool, retrieval, chain, other };
enum class SpanStatus { ok, error, unset };

std::string_view to_string(SpanKind kind);
std::string_view to_string(SpanStatus status);
std::optional<SpanKind> parse_span_kind(std::string_view text);
std::optional<SpanStatus> parse_span_status(std::string_view text);

// Scalars stay typed; nested JSON values are kept as their compact JSON text.
using AttributeValue = std::variant<bool, std::int64_t, double, std::string>;

struct Attribute {
  std::string key;
  AttributeValue value;

  bool operator==(const Attribute&) const = default;
};

// File order is preserved.
using Attributes = std::vector<Attribute>;

struct SpanEvent {
  std::int64_t timestamp_ns = 0;
  std::string name;
  Attributes attributes;

  bool operator==(const SpanEvent&) const = default;
};

struct SpanRecord {
  std::string span_id;
  std::optional<std::string> parent_span_id;
  std::string trace_id;
  std::string name;
  SpanKind kind = SpanKind::other;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  SpanStatus status = SpanStatus::unset;
  Attributes attributes;
  std::vector<SpanEvent> events;

  std::int64_t duration_ns() const { return end_ns - start_ns; }
  const AttributeValue* attribute(std::string_view key) const;

  bool operator==(const SpanRecord&) const = default;
};

// Maps `openinference.span.kind`, then `span.kind`, then the `tool.` / `llm.`
// name prefixes; anything else is `other`.
SpanKind infer_span_kind(std::string_view name, const Attributes& attributes);

std::string render_attribute_value(const AttributeValue& value);

enum class TraceFormat { otlp_json, flat_json };

std::optional<TraceFormat> parse_trace_format(std::string_view text);

// Sniffs the top-level JSON token: an object is OTLP, an array is flat.
TraceFormat detect_trace_format(std::string_view bytes);

// Throws ParseError for malformed JSON and SchemaError for missing or
// mistyped fields. Spans come back in file order.
std::vector<SpanRecord> parse_trace_file(std::string_view bytes, TraceFormat format);

// Canonical flat_json encoding; parse_trace_file(write_flat_json(s)) == s.
std::string write_flat_json(std::span<const SpanRecord> spans);

struct TraceNode {
  SpanRecord span;
  // Effective parent after orphan re-rooting and cycle breaking.
  std::optional<std::string> parent;
  // Sorted by (start_ns, span_id).
  std::vector<std::string> children;
};

struct TraceTree {
  std::string trace_id;
  std::vector<std::string> roots;
  std::map<std::string, TraceNode> nodes;
  // Spans re-rooted because their parent is missing or closed a cycle.
  std::size_t orphan_count = 0;

  const TraceNode& node(std::string_view span_id) const;
  std::size_t size() const { return nodes.size(); }
  std::size_t depth() const;
};

TraceTree build_trace_tree(std::span<const SpanRecord> spans);

inline constexpr std::size_t kDefaultTruncationLimit = 2000;
inline constexpr std::size_t kMinTruncationLimit = 64;

struct OutlineSection {
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct OutlineDocument {
  std::string text;
  // outline number ("2.1.3") -> span_id
  std::map<std::string, std::string> index;
  // span_id -> outline number
  std::map<std::string, std::string> number_of;
  // outline number -> the span's own lines (header, attributes, events)
  std::map<std::string, OutlineSection> sections;
  std::size_t truncation_limit = kDefaultTruncationLimit;

  std::string_view section_text(std::string_view outline_number) const;
  bool contains(std::string_view outline_number) const;
};

OutlineDocument serialize_outline(const TraceTree& tree,
                                  std::size_t truncation_limit = kDefaultTruncationLimit);

// Renders `value` under the truncation rule used by the outline.
std::string truncate_value(std::string_view value, std::size_t limit);

}  // namespace compass::trace
