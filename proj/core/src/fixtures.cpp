#include "compass/fixtures.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::fixtures {

using nlohmann::json;

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  if (bound == 0) throw InvariantError("SplitMix64::below requires a positive bound");
  return next() % bound;
}

std::string_view to_string(FaultTarget target) {
  switch (target) {
    case FaultTarget::tool_span: return "tool_span";
    case FaultTarget::llm_span: return "llm_span";
    case FaultTarget::root: return "root";
  }
  return "tool_span";
}

std::vector<FaultSpec> load_faults(std::string_view bytes, const taxonomy::Taxonomy& taxonomy) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed faults file: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw SchemaError("faults file must be a JSON array", "");
  std::vector<FaultSpec> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& f = doc[i];
    const auto index = static_cast<std::ptrdiff_t>(i);
    if (!f.is_object() || !f.contains("error_type") || !f["error_type"].is_string()) {
      throw SchemaError("fault requires string 'error_type'", "error_type", index);
    }
    FaultSpec spec;
    spec.error_type = taxonomy::resolve_error_type(taxonomy, f["error_type"].get<std::string>());
    const auto target = f.value("target", std::string("tool_span"));
    if (target == "tool_span") {
      spec.target = FaultTarget::tool_span;
    } else if (target == "llm_span") {
      spec.target = FaultTarget::llm_span;
    } else if (target == "root") {
      spec.target = FaultTarget::root;
    } else {
      throw SchemaError("unknown fault target '" + target + "'", "target", index);
    }
    spec.payload = f.value("payload", spec.payload);
    spec.count = f.value("count", 1);
    if (spec.count < 1) throw SchemaError("fault count must be >= 1", "count", index);
    out.push_back(std::move(spec));
  }
  return out;
}

namespace {

constexpr std::int64_t kEpochNs = 1'700'000'000'000'000'000;
constexpr std::int64_t kMs = 1'000'000;
constexpr std::size_t kMaxSpans = 100'000;

constexpr const char* kTools[] = {"web_search", "page_down", "python_exec", "file_read", "calculator"};

std::string hex_id(SplitMix64& rng, int words) {
  std::string out;
  for (int i = 0; i < words; ++i) out += util::to_hex(rng.next());
  return out;
}

std::string render_payload(std::string payload, const std::string& span, int n) {
  auto replace = [&](std::string_view from, const std::string& to) {
    for (auto pos = payload.find(from); pos != std::string::npos; pos = payload.find(from, pos + to.size())) {
      payload.replace(pos, from.size(), to);
    }
  };
  replace("{span}", span);
  replace("{n}", std::to_string(n));
  return payload;
}

}  // namespace

GeneratedTrace generate_trace(std::uint64_t seed, const TraceShape& shape, const std::vector<FaultSpec>& faults,
                              const taxonomy::TaxonomyMapping& mapping) {
  if (shape.depth < 1) throw GenerationError("depth must be >= 1");
  if (shape.fanout < 1) throw GenerationError("fanout must be >= 1");
  if (shape.tool_calls < 0) throw GenerationError("tool_calls must be >= 0");
  std::size_t total = static_cast<std::size_t>(shape.tool_calls);
  std::size_t level_size = 1;
  for (int d = 0; d < shape.depth; ++d) {
    total += level_size;
    if (total > kMaxSpans) throw GenerationError("shape exceeds " + std::to_string(kMaxSpans) + " spans");
    level_size *= static_cast<std::size_t>(shape.fanout);
  }

  SplitMix64 rng(seed);
  GeneratedTrace out;
  out.trace_id = hex_id(rng, 2);

  // Levels are built breadth-first; timing is assigned afterwards.
  std::vector<std::vector<std::size_t>> children;
  auto add = [&](std::optional<std::size_t> parent, std::string name, trace::SpanKind kind) {
    trace::SpanRecord s;
    s.span_id = hex_id(rng, 1);
    s.trace_id = out.trace_id;
    s.name = std::move(name);
    s.kind = kind;
    s.status = trace::SpanStatus::ok;
    if (parent) {
      s.parent_span_id = out.spans[*parent].span_id;
      children[*parent].push_back(out.spans.size());
    }
    out.spans.push_back(std::move(s));
    children.emplace_back();
    return out.spans.size() - 1;
  };

  std::vector<std::size_t> level{add(std::nullopt, "agent.run", trace::SpanKind::agent)};
  out.spans[0].attributes.push_back({"openinference.span.kind", std::string("AGENT")});
  out.spans[0].attributes.push_back({"input.value", std::string("task #" + std::to_string(seed))});
  std::vector<std::size_t> llm_spans;
  for (int d = 1; d < shape.depth; ++d) {
    const bool last = d == shape.depth - 1;
    std::vector<std::size_t> next;
    int step = 0;
    for (auto parent : level) {
      for (int c = 0; c < shape.fanout; ++c) {
        ++step;
        if (last) {
          const auto id = add(parent, "llm.call", trace::SpanKind::llm);
          auto& s = out.spans[id];
          s.attributes.push_back({"openinference.span.kind", std::string("LLM")});
          s.attributes.push_back({"llm.model_name", std::string("synthetic-model")});
          s.attributes.push_back({"input.value", std::string("step " + std::to_string(step) + " prompt")});
          s.attributes.push_back({"output.value", std::string("step " + std::to_string(step) + " reasoning")});
          s.attributes.push_back({"llm.token_count.total", static_cast<std::int64_t>(100 + rng.below(900))});
          llm_spans.push_back(id);
          next.push_back(id);
        } else {
          const auto id = add(parent, "chain.step_" + std::to_string(step), trace::SpanKind::chain);
          out.spans[id].attributes.push_back({"openinference.span.kind", std::string("CHAIN")});
          next.push_back(id);
        }
      }
    }
    level = std::move(next);
  }

  std::vector<std::size_t> tool_spans;
  for (int t = 0; t < shape.tool_calls; ++t) {
    const auto parent = llm_spans.empty() ? std::size_t{0} : llm_spans[static_cast<std::size_t>(t) % llm_spans.size()];
    const std::string tool = kTools[rng.below(std::size(kTools))];
    const auto id = add(parent, "tool." + tool, trace::SpanKind::tool);
    auto& s = out.spans[id];
    s.attributes.push_back({"openinference.span.kind", std::string("TOOL")});
    s.attributes.push_back({"tool.name", tool});
    s.attributes.push_back({"input.value", std::string("{\"query\": \"item " + std::to_string(rng.below(1000)) + "\"}")});
    s.attributes.push_back({"output.value", std::string("ok")});
    tool_spans.push_back(id);
  }

  // Depth-first timing: each span starts after its previous sibling ends.
  std::int64_t cursor = kEpochNs + static_cast<std::int64_t>(rng.below(1'000'000)) * kMs;
  std::vector<std::pair<std::size_t, bool>> stack{{0, false}};
  while (!stack.empty()) {
    auto [id, done] = stack.back();
    stack.pop_back();
    auto& s = out.spans[id];
    if (done) {
      cursor += static_cast<std::int64_t>(1 + rng.below(20)) * kMs;
      s.end_ns = cursor;
      continue;
    }
    s.start_ns = cursor;
    cursor += static_cast<std::int64_t>(1 + rng.below(50)) * kMs;
    stack.emplace_back(id, true);
    for (auto it = children[id].rbegin(); it != children[id].rend(); ++it) stack.emplace_back(*it, false);
  }

  std::vector<bool> used(out.spans.size(), false);
  for (const auto& fault : faults) {
    const std::vector<std::size_t> root_only{0};
    const auto& pool = fault.target == FaultTarget::tool_span  ? tool_spans
                       : fault.target == FaultTarget::llm_span ? llm_spans
                                                               : root_only;
    if (pool.empty()) {
      throw GenerationError("fault " + fault.error_type.path + " targets " + std::string(to_string(fault.target)) +
                            " but the shape has none");
    }
    for (int n = 1; n <= fault.count; ++n) {
      std::vector<std::size_t> fresh;
      for (auto id : pool) {
        if (!used[id]) fresh.push_back(id);
      }
      const auto& choices = fresh.empty() ? pool : fresh;
      const auto id = choices[rng.below(choices.size())];
      used[id] = true;
      auto& s = out.spans[id];
      const auto payload = render_payload(fault.payload, s.name, n);
      s.events.push_back({s.end_ns, "exception", {{"exception.message", payload}}});
      if (fault.target == FaultTarget::tool_span) s.status = trace::SpanStatus::error;
      out.faults.push_back({s.span_id, fault.error_type, taxonomy::map_to_external(mapping, fault.error_type), payload});
    }
  }
  out.human_score = std::max(0.0, 1.0 - 0.1 * static_cast<double>(out.faults.size()));
  return out;
}

std::string GeneratedTrace::trace_json() const { return trace::write_flat_json(spans); }

namespace {

json truth_entry(const GeneratedTrace& t) {
  json errors = json::array();
  for (const auto& f : t.faults) errors.push_back({{"span_id", f.span_id}, {"category", f.label}});
  return {{"trace_id", t.trace_id}, {"human_score", t.human_score}, {"errors", errors}};
}

}  // namespace

std::string GeneratedTrace::annotation_json() const {
  return json{{"traces", json::array({truth_entry(*this)})}}.dump(2) + "\n";
}

std::string annotations_json(const std::vector<GeneratedTrace>& traces) {
  json list = json::array();
  for (const auto& t : traces) list.push_back(truth_entry(t));
  return json{{"traces", list}}.dump(2) + "\n";
}

std::map<std::string, std::string> build_oracle_script(const GeneratedTrace& g, std::size_t truncation_limit) {
  const auto tree = trace::build_trace_tree(g.spans);
  const auto outline = trace::serialize_outline(tree, truncation_limit);
  const auto key = [&](const char* stage, const char* phase) {
    return std::string(stage) + ":" + phase + ":" + g.trace_id;
  };
  auto plan = [](const std::string& strategy) { return json{{"strategy", strategy}, {"focus", json::array()}}.dump(); };

  std::map<std::string, std::string> script;
  json findings = json::array();
  json ids = json::array();
  for (std::size_t i = 0; i < g.faults.size(); ++i) {
    const auto& f = g.faults[i];
    const auto& number = outline.number_of.at(f.span_id);
    std::string evidence = f.evidence;
    if (outline.section_text(number).find(evidence) == std::string_view::npos) {
      evidence = tree.node(f.span_id).span.name;
    }
    findings.push_back({{"outline_number", number},
                        {"error_type", f.error_type.path},
                        {"severity", "high"},
                        {"evidence", evidence},
                        {"explanation", "injected " + f.error_type.leaf + " fault"},
                        {"confidence", 0.9}});
    ids.push_back("F" + std::to_string(i + 1));
  }
  json themes = json::array();
  if (!ids.empty()) {
    themes.push_back({{"label", "Injected faults"}, {"finding_ids", ids}, {"causal_note", "synthetic injection"}});
  }
  json scores = json::object();
  for (const char* dim : {"factual_grounding", "safety", "plan_execution", "tool_use", "efficiency"}) {
    scores[dim] = g.human_score;
  }

  script[key("identify", "plan")] = plan("Inspect every span for exception events.");
  script[key("identify", "execute")] = json{{"findings", findings}}.dump();
  script[key("theme", "plan")] = plan("Group all injected faults together.");
  script[key("theme", "execute")] = json{{"themes", themes}}.dump();
  script[key("score", "plan")] = plan("Score every dimension by the fault count.");
  script[key("score", "execute")] = json{{"scores", scores}, {"rationale", json::object()}}.dump();
  script[key("synthesize", "plan")] = plan("Summarize the injected faults.");
  script[key("synthesize", "execute")] =
      json{{"summary", std::to_string(g.faults.size()) + " injected faults"},
           {"key_insights", json::array()},
           {"fix_recommendations", json::array()}}
          .dump();
  return script;
}

}  // namespace compass::fixtures
