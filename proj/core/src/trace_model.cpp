#include "compass/trace_model.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::trace {

using ojson = nlohmann::ordered_json;

std::string_view to_string(SpanKind kind) {
  switch (kind) {
    case SpanKind::agent: return "agent";
    case SpanKind::llm: return "llm";
    case SpanKind::tool: return "tool";
    case SpanKind::retrieval: return "retrieval";
    case SpanKind::chain: return "chain";
    case SpanKind::other: return "other";
  }
  return "other";
}

std::string_view to_string(SpanStatus status) {
  switch (status) {
    case SpanStatus::ok: return "ok";
    case SpanStatus::error: return "error";
    case SpanStatus::unset: return "unset";
  }
  return "unset";
}

std::optional<SpanKind> parse_span_kind(std::string_view text) {
  const auto lower = util::ascii_lower(text);
  if (lower == "agent") return SpanKind::agent;
  if (lower == "llm") return SpanKind::llm;
  if (lower == "tool") return SpanKind::tool;
  if (lower == "retrieval" || lower == "retriever") return SpanKind::retrieval;
  if (lower == "chain") return SpanKind::chain;
  if (lower == "other") return SpanKind::other;
  return std::nullopt;
}

std::optional<SpanStatus> parse_span_status(std::string_view text) {
  const auto lower = util::ascii_lower(text);
  if (lower == "ok" || lower == "status_code_ok") return SpanStatus::ok;
  if (lower == "error" || lower == "status_code_error") return SpanStatus::error;
  if (lower == "unset" || lower == "status_code_unset" || lower.empty()) return SpanStatus::unset;
  return std::nullopt;
}

std::optional<TraceFormat> parse_trace_format(std::string_view text) {
  if (text == "otlp_json" || text == "otlp") return TraceFormat::otlp_json;
  if (text == "flat_json" || text == "flat") return TraceFormat::flat_json;
  return std::nullopt;
}

const AttributeValue* SpanRecord::attribute(std::string_view key) const {
  for (const auto& attr : attributes) {
    if (attr.key == key) return &attr.value;
  }
  return nullptr;
}

SpanKind infer_span_kind(std::string_view name, const Attributes& attributes) {
  for (std::string_view key : {"openinference.span.kind", "span.kind"}) {
    for (const auto& attr : attributes) {
      if (attr.key != key) continue;
      if (const auto* text = std::get_if<std::string>(&attr.value)) {
        if (auto kind = parse_span_kind(*text)) return *kind;
      }
    }
  }
  if (name.starts_with("tool.")) return SpanKind::tool;
  if (name.starts_with("llm.")) return SpanKind::llm;
  return SpanKind::other;
}

std::string render_attribute_value(const AttributeValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return nlohmann::json(v).dump();
        } else {
          return v;
        }
      },
      value);
}

TraceFormat detect_trace_format(std::string_view bytes) {
  for (char c : bytes) {
    if (c == '[') return TraceFormat::flat_json;
    if (c == '{') return TraceFormat::otlp_json;
    if (c != ' ' && c != '\n' && c != '\r' && c != '\t') break;
  }
  return TraceFormat::flat_json;
}

namespace {

ojson parse_json(std::string_view bytes) {
  try {
    return ojson::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
}

[[noreturn]] void missing(const char* field, std::size_t record) {
  throw SchemaError(std::string("missing required field '") + field + "'", field,
                    static_cast<std::ptrdiff_t>(record));
}

[[noreturn]] void mistyped(const char* field, std::size_t record, const char* expected) {
  throw SchemaError(std::string("field '") + field + "' must be " + expected, field,
                    static_cast<std::ptrdiff_t>(record));
}

std::string require_string(const ojson& obj, const char* field, std::size_t record) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) missing(field, record);
  if (!it->is_string()) mistyped(field, record, "a string");
  auto value = it->get<std::string>();
  if (value.empty()) missing(field, record);
  return value;
}

std::optional<std::int64_t> as_int64(const ojson& value) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return out;
  }
  return std::nullopt;
}

std::int64_t require_int(const ojson& obj, const char* field, std::size_t record) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) missing(field, record);
  auto value = as_int64(*it);
  if (!value) mistyped(field, record, "an integer");
  return *value;
}

std::optional<std::string> optional_string(const ojson& obj, const char* field, std::size_t record) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) mistyped(field, record, "a string");
  return it->get<std::string>();
}

AttributeValue scalar_from_json(const ojson& value) {
  if (value.is_boolean()) return value.get<bool>();
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_number_float()) return value.get<double>();
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

Attributes flat_attributes(const ojson& obj, const char* field, std::size_t record) {
  Attributes out;
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_object()) mistyped(field, record, "an object");
  for (const auto& [key, value] : it->items()) out.push_back({key, scalar_from_json(value)});
  return out;
}

void check_times(const SpanRecord& span, std::size_t record, const char* end_field) {
  if (span.end_ns < span.start_ns) {
    throw SchemaError("end time precedes start time", end_field,
                      static_cast<std::ptrdiff_t>(record));
  }
}

std::vector<SpanRecord> parse_flat(const ojson& doc) {
  if (!doc.is_array()) throw SchemaError("flat_json root must be an array", "<root>");
  std::vector<SpanRecord> spans;
  spans.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object()) throw SchemaError("span record must be an object", "<record>", static_cast<std::ptrdiff_t>(i));
    SpanRecord span;
    span.span_id = require_string(rec, "span_id", i);
    span.trace_id = require_string(rec, "trace_id", i);
    span.start_ns = require_int(rec, "start_ns", i);
    span.end_ns = require_int(rec, "end_ns", i);
    check_times(span, i, "end_ns");
    if (auto parent = optional_string(rec, "parent_span_id", i); parent && !parent->empty()) {
      span.parent_span_id = std::move(*parent);
    }
    span.name = optional_string(rec, "name", i).value_or("");
    if (auto status = optional_string(rec, "status", i)) {
      auto parsed = parse_span_status(*status);
      if (!parsed) mistyped("status", i, "one of ok, error, unset");
      span.status = *parsed;
    }
    span.attributes = flat_attributes(rec, "attributes", i);
    if (auto events = rec.find("events"); events != rec.end() && !events->is_null()) {
      if (!events->is_array()) mistyped("events", i, "an array");
      for (const auto& ev : *events) {
        if (!ev.is_object()) mistyped("events", i, "an array of objects");
        SpanEvent event;
        auto ts = ev.find("timestamp_ns");
        if (ts == ev.end()) missing("events.timestamp_ns", i);
        auto parsed = as_int64(*ts);
        if (!parsed) mistyped("events.timestamp_ns", i, "an integer");
        event.timestamp_ns = *parsed;
        event.name = optional_string(ev, "name", i).value_or("");
        event.attributes = flat_attributes(ev, "attributes", i);
        span.events.push_back(std::move(event));
      }
    }
    if (auto kind = optional_string(rec, "kind", i)) {
      auto parsed = parse_span_kind(*kind);
      if (!parsed) mistyped("kind", i, "a known span kind");
      span.kind = *parsed;
    } else {
      span.kind = infer_span_kind(span.name, span.attributes);
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

AttributeValue otlp_any_value(const ojson& any) {
  if (!any.is_object()) return any.dump();
  if (auto it = any.find("stringValue"); it != any.end() && it->is_string()) return it->get<std::string>();
  if (auto it = any.find("boolValue"); it != any.end() && it->is_boolean()) return it->get<bool>();
  if (auto it = any.find("intValue"); it != any.end()) {
    if (auto v = as_int64(*it)) return *v;
  }
  if (auto it = any.find("doubleValue"); it != any.end() && it->is_number()) return it->get<double>();
  for (const char* nested : {"arrayValue", "kvlistValue", "bytesValue"}) {
    if (auto it = any.find(nested); it != any.end()) return it->dump();
  }
  return any.dump();
}

Attributes otlp_attributes(const ojson& obj, std::size_t record) {
  Attributes out;
  auto it = obj.find("attributes");
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) mistyped("attributes", record, "an array of key/value objects");
  for (const auto& kv : *it) {
    if (!kv.is_object() || !kv.contains("key") || !kv["key"].is_string()) {
      mistyped("attributes", record, "an array of key/value objects");
    }
    auto value = kv.find("value");
    out.push_back({kv["key"].get<std::string>(),
                   value == kv.end() ? AttributeValue{std::string{}} : otlp_any_value(*value)});
  }
  return out;
}

SpanStatus otlp_status(const ojson& span, std::size_t record) {
  auto it = span.find("status");
  if (it == span.end() || it->is_null()) return SpanStatus::unset;
  if (!it->is_object()) mistyped("status", record, "an object");
  auto code = it->find("code");
  if (code == it->end() || code->is_null()) return SpanStatus::unset;
  if (code->is_number_integer()) {
    switch (code->get<int>()) {
      case 1: return SpanStatus::ok;
      case 2: return SpanStatus::error;
      default: return SpanStatus::unset;
    }
  }
  if (code->is_string()) {
    if (auto parsed = parse_span_status(code->get<std::string>())) return *parsed;
  }
  mistyped("status.code", record, "a status code");
}

std::vector<SpanRecord> parse_otlp(const ojson& doc) {
  if (!doc.is_object()) throw SchemaError("otlp_json root must be an object", "<root>");
  std::vector<SpanRecord> spans;
  auto resource_spans = doc.find("resourceSpans");
  if (resource_spans == doc.end()) throw SchemaError("missing 'resourceSpans'", "resourceSpans");
  if (!resource_spans->is_array()) throw SchemaError("'resourceSpans' must be an array", "resourceSpans");
  std::size_t record = 0;
  for (const auto& rs : *resource_spans) {
    for (const char* scope_key : {"scopeSpans", "instrumentationLibrarySpans"}) {
      auto scopes = rs.find(scope_key);
      if (scopes == rs.end() || !scopes->is_array()) continue;
      for (const auto& scope : *scopes) {
        auto list = scope.find("spans");
        if (list == scope.end() || !list->is_array()) continue;
        for (const auto& s : *list) {
          if (!s.is_object()) throw SchemaError("span must be an object", "<record>", static_cast<std::ptrdiff_t>(record));
          SpanRecord span;
          span.span_id = require_string(s, "spanId", record);
          span.trace_id = require_string(s, "traceId", record);
          span.start_ns = require_int(s, "startTimeUnixNano", record);
          span.end_ns = require_int(s, "endTimeUnixNano", record);
          check_times(span, record, "endTimeUnixNano");
          if (auto parent = optional_string(s, "parentSpanId", record); parent && !parent->empty()) {
            span.parent_span_id = std::move(*parent);
          }
          span.name = optional_string(s, "name", record).value_or("");
          span.status = otlp_status(s, record);
          span.attributes = otlp_attributes(s, record);
          if (auto events = s.find("events"); events != s.end() && events->is_array()) {
            for (const auto& ev : *events) {
              SpanEvent event;
              if (auto ts = ev.find("timeUnixNano"); ts != ev.end()) {
                auto parsed = as_int64(*ts);
                if (!parsed) mistyped("events.timeUnixNano", record, "an integer");
                event.timestamp_ns = *parsed;
              }
              event.name = optional_string(ev, "name", record).value_or("");
              event.attributes = otlp_attributes(ev, record);
              span.events.push_back(std::move(event));
            }
          }
          span.kind = infer_span_kind(span.name, span.attributes);
          spans.push_back(std::move(span));
          ++record;
        }
      }
    }
  }
  return spans;
}

ojson attributes_to_json(const Attributes& attributes) {
  ojson obj = ojson::object();
  for (const auto& attr : attributes) {
    std::visit([&](const auto& v) { obj[attr.key] = v; }, attr.value);
  }
  return obj;
}

}  // namespace

std::vector<SpanRecord> parse_trace_file(std::string_view bytes, TraceFormat format) {
  const auto doc = parse_json(bytes);
  return format == TraceFormat::flat_json ? parse_flat(doc) : parse_otlp(doc);
}

std::string write_flat_json(std::span<const SpanRecord> spans) {
  ojson doc = ojson::array();
  for (const auto& span : spans) {
    ojson rec = ojson::object();
    rec["span_id"] = span.span_id;
    rec["parent_span_id"] = span.parent_span_id ? ojson(*span.parent_span_id) : ojson(nullptr);
    rec["trace_id"] = span.trace_id;
    rec["name"] = span.name;
    rec["kind"] = to_string(span.kind);
    rec["start_ns"] = span.start_ns;
    rec["end_ns"] = span.end_ns;
    rec["status"] = to_string(span.status);
    rec["attributes"] = attributes_to_json(span.attributes);
    if (!span.events.empty()) {
      ojson events = ojson::array();
      for (const auto& ev : span.events) {
        events.push_back({{"timestamp_ns", ev.timestamp_ns},
                          {"name", ev.name},
                          {"attributes", attributes_to_json(ev.attributes)}});
      }
      rec["events"] = std::move(events);
    }
    doc.push_back(std::move(rec));
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Tree reconstruction

const TraceNode& TraceTree::node(std::string_view span_id) const {
  auto it = nodes.find(std::string(span_id));
  if (it == nodes.end()) throw InvariantError("unknown span_id " + std::string(span_id));
  return it->second;
}

std::size_t TraceTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<const std::string*, std::size_t>> stack;
  for (const auto& root : roots) stack.emplace_back(&root, 1);
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (const auto& child : node(*id).children) stack.emplace_back(&child, d + 1);
  }
  return best;
}

namespace {

bool starts_before(const SpanRecord& a, const SpanRecord& b) {
  return std::tie(a.start_ns, a.span_id) < std::tie(b.start_ns, b.span_id);
}

}  // namespace

TraceTree build_trace_tree(std::span<const SpanRecord> spans) {
  if (spans.empty()) throw EmptyTraceError();

  std::set<std::string> trace_ids;
  for (const auto& span : spans) trace_ids.insert(span.trace_id);
  if (trace_ids.size() > 1) {
    std::string ids;
    for (const auto& id : trace_ids) ids += (ids.empty() ? "" : ", ") + id;
    throw InvariantError("spans belong to more than one trace: " + ids);
  }

  TraceTree tree;
  tree.trace_id = *trace_ids.begin();
  for (const auto& span : spans) {
    auto [it, inserted] = tree.nodes.try_emplace(span.span_id, TraceNode{span, std::nullopt, {}});
    if (!inserted) throw InvariantError("duplicate span_id " + span.span_id);
  }

  for (auto& [id, node] : tree.nodes) {
    const auto& parent = node.span.parent_span_id;
    if (!parent) continue;
    if (tree.nodes.contains(*parent)) {
      node.parent = *parent;
    } else {
      ++tree.orphan_count;
    }
  }

  // Each node has at most one parent, so every cycle is a simple loop found by
  // walking parent links. The edge into the latest-starting member is cut.
  enum class Mark { unvisited, in_path, done };
  std::unordered_map<std::string, Mark> mark;
  for (const auto& [id, node] : tree.nodes) mark[id] = Mark::unvisited;
  for (const auto& [start_id, start_node] : tree.nodes) {
    if (mark[start_id] != Mark::unvisited) continue;
    std::vector<std::string> path;
    std::string cur = start_id;
    while (true) {
      auto& m = mark[cur];
      if (m == Mark::done) break;
      if (m == Mark::in_path) {
        auto loop_begin = std::find(path.begin(), path.end(), cur);
        auto latest = loop_begin;
        for (auto it = loop_begin; it != path.end(); ++it) {
          if (starts_before(tree.nodes.at(*latest).span, tree.nodes.at(*it).span)) latest = it;
        }
        tree.nodes.at(*latest).parent.reset();
        ++tree.orphan_count;
        break;
      }
      m = Mark::in_path;
      path.push_back(cur);
      const auto& parent = tree.nodes.at(cur).parent;
      if (!parent) break;
      cur = *parent;
    }
    for (const auto& id : path) mark[id] = Mark::done;
  }

  for (auto& [id, node] : tree.nodes) {
    if (node.parent) {
      tree.nodes.at(*node.parent).children.push_back(id);
    } else {
      tree.roots.push_back(id);
    }
  }
  auto by_start = [&](const std::string& a, const std::string& b) {
    return starts_before(tree.nodes.at(a).span, tree.nodes.at(b).span);
  };
  for (auto& [id, node] : tree.nodes) std::sort(node.children.begin(), node.children.end(), by_start);
  std::sort(tree.roots.begin(), tree.roots.end(), by_start);
  return tree;
}

// ---------------------------------------------------------------------------
// Outline serialization

std::string_view OutlineDocument::section_text(std::string_view outline_number) const {
  auto it = sections.find(std::string(outline_number));
  if (it == sections.end()) return {};
  return std::string_view(text).substr(it->second.offset, it->second.length);
}

bool OutlineDocument::contains(std::string_view outline_number) const {
  return index.contains(std::string(outline_number));
}

namespace {

std::string escape_controls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Tenths of a millisecond, rounded half up, printed as "<ms>.<tenth>".
std::string format_ms(std::int64_t ns) {
  const bool negative = ns < 0;
  const std::int64_t magnitude = negative ? -ns : ns;
  const std::int64_t tenths = (magnitude + 50'000) / 100'000;
  return (negative ? "-" : "") + std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

void append_attributes(std::string& out, const Attributes& attributes, const std::string& indent,
                       std::size_t limit) {
  for (const auto& attr : attributes) {
    out += indent;
    out += escape_controls(attr.key);
    out += ": ";
    out += truncate_value(escape_controls(render_attribute_value(attr.value)), limit);
    out += '\n';
  }
}

}  // namespace

std::string truncate_value(std::string_view value, std::size_t limit) {
  const std::size_t length = util::utf8_length(value);
  if (length <= limit) return std::string(value);
  std::string out(util::utf8_prefix(value, limit));
  out += "…[truncated " + std::to_string(length - limit) + " chars]";
  return out;
}

OutlineDocument serialize_outline(const TraceTree& tree, std::size_t truncation_limit) {
  if (truncation_limit < kMinTruncationLimit) {
    throw InvariantError("truncation_limit must be at least " + std::to_string(kMinTruncationLimit));
  }
  OutlineDocument doc;
  doc.truncation_limit = truncation_limit;

  struct Frame {
    const std::string* span_id;
    std::string number;
    std::size_t depth;
  };
  std::vector<Frame> stack;
  for (std::size_t i = tree.roots.size(); i-- > 0;) {
    stack.push_back({&tree.roots[i], std::to_string(i + 1), 0});
  }

  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    const auto& node = tree.node(*frame.span_id);
    const auto& span = node.span;
    const std::string indent(frame.depth * 2, ' ');
    const std::string detail_indent = indent + "   ";

    const std::size_t offset = doc.text.size();
    doc.text += indent + frame.number + ". [" + std::string(to_string(span.kind)) + "] " +
                escape_controls(span.name) + " (status=" + std::string(to_string(span.status)) +
                ", duration=" + format_ms(span.duration_ns()) + "ms)\n";
    append_attributes(doc.text, span.attributes, detail_indent, truncation_limit);
    for (const auto& event : span.events) {
      doc.text += detail_indent + "event: " + escape_controls(event.name) + " (+" +
                  format_ms(event.timestamp_ns - span.start_ns) + "ms)\n";
      append_attributes(doc.text, event.attributes, detail_indent + "  ", truncation_limit);
    }
    doc.sections[frame.number] = {offset, doc.text.size() - offset};
    doc.index[frame.number] = span.span_id;
    doc.number_of[span.span_id] = frame.number;

    for (std::size_t i = node.children.size(); i-- > 0;) {
      stack.push_back({&node.children[i], frame.number + "." + std::to_string(i + 1), frame.depth + 1});
    }
  }
  return doc;
}

}  // namespace compass::trace
