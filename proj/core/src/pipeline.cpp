#include "compass/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "compass/memory.hpp"
#include "compass/util.hpp"

namespace compass::pipeline {

using nlohmann::json;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::identify: return "identify";
    case Stage::theme: return "theme";
    case Stage::score: return "score";
    case Stage::synthesize: return "synthesize";
  }
  return "identify";
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::low: return "low";
    case Severity::medium: return "medium";
    case Severity::high: return "high";
    case Severity::critical: return "critical";
  }
  return "medium";
}

std::string_view to_string(Dimension dimension) {
  switch (dimension) {
    case Dimension::factual_grounding: return "factual_grounding";
    case Dimension::safety: return "safety";
    case Dimension::plan_execution: return "plan_execution";
    case Dimension::tool_use: return "tool_use";
    case Dimension::efficiency: return "efficiency";
  }
  return "factual_grounding";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (auto s : kStages) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::optional<Severity> parse_severity(std::string_view text) {
  const auto lower = util::ascii_lower(text);
  for (auto s : {Severity::low, Severity::medium, Severity::high, Severity::critical}) {
    if (to_string(s) == lower) return s;
  }
  return std::nullopt;
}

std::optional<Dimension> parse_dimension(std::string_view text) {
  for (auto d : kDimensions) {
    if (to_string(d) == text) return d;
  }
  return std::nullopt;
}

double QualityScorecard::mean() const {
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [dim, score] : scores) sum += score;
  return sum / static_cast<double>(scores.size());
}

StageError::StageError(Stage stage, std::string phase, const std::string& what)
    : Error(std::string(to_string(stage)) + " stage (" + phase + "): " + what),
      stage_(stage),
      phase_(std::move(phase)) {}

Aggregate aggregate_and_prioritize(const QualityScorecard& scorecard, std::span<const ErrorFinding> findings,
                                   const PriorityPolicy& policy) {
  double weighted = 0.0;
  double total_weight = 0.0;
  for (const auto& [dim, score] : scorecard.scores) {
    auto w = policy.weights.find(dim);
    const double weight = w == policy.weights.end() ? 1.0 : w->second;
    weighted += weight * score;
    total_weight += weight;
  }
  const double mean = total_weight > 0.0 ? weighted / total_weight : 0.0;

  std::size_t critical = 0;
  std::size_t high = 0;
  for (const auto& f : findings) {
    if (f.severity == Severity::critical) ++critical;
    if (f.severity == Severity::high) ++high;
  }
  const double penalty =
      std::max(policy.penalty_floor, 1.0 - policy.critical_penalty * static_cast<double>(critical) -
                                         policy.high_penalty * static_cast<double>(high));

  Aggregate out;
  out.score = mean * penalty;
  if (out.score < policy.critical_below) {
    out.priority = critical > 0 ? Priority::critical : Priority::high;
  } else if (out.score < policy.high_below) {
    out.priority = Priority::high;
  } else if (out.score < policy.medium_below) {
    out.priority = Priority::medium;
  } else {
    out.priority = Priority::low;
  }
  return out;
}

Clock logical_clock() {
  auto tick = std::make_shared<std::int64_t>(0);
  return [tick] { return (*tick)++; };
}

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

// ---------------------------------------------------------------------------
// Structured-output handling

namespace {

// Raised when a response does not match the stage's JSON schema. Triggers
// one repair round-trip before the stage fails.
struct SchemaViolation {
  std::string message;
};

json extract_json(std::string_view text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw SchemaViolation{"response contains no JSON object"};
  }
  try {
    return json::parse(text.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw SchemaViolation{std::string("response is not valid JSON: ") + e.what()};
  }
}

const json& require(const json& obj, const char* key, bool (json::*check)() const noexcept, const char* type) {
  auto it = obj.find(key);
  if (it == obj.end() || !((*it).*check)()) {
    throw SchemaViolation{std::string("field '") + key + "' must be " + type};
  }
  return *it;
}

std::vector<std::string> string_list(const json& obj, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw SchemaViolation{std::string("field '") + key + "' must be an array of strings"};
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaViolation{std::string("field '") + key + "' must be an array of strings"};
    out.push_back(v.get<std::string>());
  }
  return out;
}

backend::ChatResult call_backend(const StageContext& ctx, Stage stage, const backend::ChatRequest& request) {
  try {
    return ctx.backend.chat_complete(request);
  } catch (const Error& e) {
    throw StageError(stage, request.phase, e.what());
  }
}

template <typename Parse>
auto call_structured(const StageContext& ctx, Stage stage, const std::string& phase,
                     backend::ResponseSchema schema, const std::string& prompt, double temperature,
                     int* repairs, Parse&& parse) -> decltype(parse(json{})) {
  backend::ChatRequest request;
  request.system_text = prompts::system_text(stage, phase);
  request.user_text = prompt;
  request.temperature = temperature;
  request.max_output_tokens = ctx.config.max_output_tokens;
  request.response_schema = schema;
  request.stage = std::string(to_string(stage));
  request.phase = phase;
  request.trace_id = ctx.trace_id;

  auto attempt = [&](const backend::ChatResult& result) {
    if (result.finish_reason == backend::FinishReason::transport_error) {
      throw StageError(stage, request.phase, "backend transport error");
    }
    if (result.finish_reason != backend::FinishReason::complete) {
      throw SchemaViolation{"response incomplete (finish_reason=" +
                            std::string(backend::to_string(result.finish_reason)) + ")"};
    }
    return parse(extract_json(result.text));
  };

  const auto first = call_backend(ctx, stage, request);
  try {
    return attempt(first);
  } catch (const SchemaViolation& violation) {
    if (repairs) ++*repairs;
    request.phase = phase + "_repair";
    request.system_text = prompts::system_text(stage, request.phase);
    request.user_text = prompts::repair_prompt(prompt, first.text, violation.message);
    const auto second = call_backend(ctx, stage, request);
    try {
      return attempt(second);
    } catch (const SchemaViolation& again) {
      throw StageError(stage, phase, "response failed schema validation after repair: " + again.message);
    }
  }
}

}  // namespace

StagePlan plan_stage(Stage stage, const StageContext& ctx, const AnalysisReport& prior,
                     std::vector<std::string>& warnings, int* repairs) {
  if (ctx.outline.index.empty()) throw InvariantError("cannot plan over an empty outline");
  const auto prompt = prompts::plan_prompt(stage, ctx, prior);
  auto plan = call_structured(ctx, stage, "plan", backend::ResponseSchema::plan, prompt,
                              ctx.config.plan_temperature, repairs, [&](const json& doc) {
                                if (!doc.is_object()) throw SchemaViolation{"plan must be a JSON object"};
                                StagePlan p;
                                p.stage = stage;
                                p.strategy_text = require(doc, "strategy", &json::is_string, "a string");
                                if (p.strategy_text.empty()) throw SchemaViolation{"strategy is empty"};
                                p.focus_outline_numbers = string_list(doc, "focus");
                                return p;
                              });
  std::vector<std::string> kept;
  for (auto& number : plan.focus_outline_numbers) {
    if (ctx.outline.contains(number)) {
      kept.push_back(std::move(number));
    } else {
      warnings.push_back("plan focus '" + number + "' is not in the outline; dropped");
    }
  }
  plan.focus_outline_numbers = std::move(kept);
  return plan;
}

namespace {

std::vector<ErrorFinding> parse_findings(const json& doc, const StageContext& ctx,
                                         std::vector<std::string>& warnings) {
  if (!doc.is_object()) throw SchemaViolation{"findings response must be a JSON object"};
  const auto& items = require(doc, "findings", &json::is_array, "an array");
  std::vector<ErrorFinding> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (!item.is_object()) throw SchemaViolation{"each finding must be an object"};
    const std::string where = "finding " + std::to_string(i);
    auto drop = [&](const std::string& why) { warnings.push_back(where + " dropped: " + why); };

    auto text_of = [&](const char* key) -> std::optional<std::string> {
      auto it = item.find(key);
      if (it == item.end() || !it->is_string()) return std::nullopt;
      return it->get<std::string>();
    };
    const auto number = text_of("outline_number");
    if (!number || !ctx.outline.contains(*number)) {
      drop("outline number '" + number.value_or("") + "' is not in the outline");
      continue;
    }
    const auto type_text = text_of("error_type");
    if (!type_text) {
      drop("missing error_type");
      continue;
    }
    std::optional<taxonomy::ErrorTypeId> type;
    try {
      type = taxonomy::resolve_error_type(ctx.taxonomy, *type_text);
    } catch (const Error& e) {
      drop(e.what());
      continue;
    }
    const auto severity = parse_severity(text_of("severity").value_or(""));
    if (!severity) {
      drop("invalid severity");
      continue;
    }
    const auto evidence = text_of("evidence");
    if (!evidence || evidence->empty() ||
        ctx.outline.section_text(*number).find(*evidence) == std::string_view::npos) {
      drop("evidence is not a verbatim quote from span " + *number);
      continue;
    }
    auto conf = item.find("confidence");
    if (conf == item.end() || !conf->is_number()) {
      drop("missing numeric confidence");
      continue;
    }
    double confidence = conf->get<double>();
    if (confidence < 0.0 || confidence > 1.0) {
      warnings.push_back(where + ": confidence " + util::format_fixed(confidence, 3) + " clamped to [0,1]");
      confidence = std::clamp(confidence, 0.0, 1.0);
    }

    ErrorFinding finding;
    finding.span_id = ctx.outline.index.at(*number);
    finding.span_name = ctx.tree.node(finding.span_id).span.name;
    finding.outline_number = *number;
    finding.error_type = *type;
    finding.severity = *severity;
    finding.evidence = *evidence;
    finding.explanation = text_of("explanation").value_or("");
    finding.confidence = confidence;
    out.push_back(std::move(finding));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].finding_id = "F" + std::to_string(i + 1);
  return out;
}

std::vector<ThemeGroup> parse_themes(const json& doc, const AnalysisReport& prior,
                                     std::vector<std::string>& warnings) {
  if (!doc.is_object()) throw SchemaViolation{"themes response must be a JSON object"};
  const auto& items = require(doc, "themes", &json::is_array, "an array");
  std::set<std::string> known;
  for (const auto& f : prior.findings) known.insert(f.finding_id);

  std::set<std::string> used;
  std::vector<ThemeGroup> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (!item.is_object()) throw SchemaViolation{"each theme must be an object"};
    ThemeGroup theme;
    theme.label = require(item, "label", &json::is_string, "a string");
    theme.member_finding_ids = string_list(item, "finding_ids");
    theme.causal_note = item.value("causal_note", std::string{});
    const std::string where = "theme '" + theme.label + "'";

    auto unknown = std::find_if(theme.member_finding_ids.begin(), theme.member_finding_ids.end(),
                                [&](const std::string& id) { return !known.contains(id); });
    if (unknown != theme.member_finding_ids.end()) {
      warnings.push_back(where + " dropped: unknown finding id '" + *unknown + "'");
      continue;
    }
    std::vector<std::string> members;
    for (auto& id : theme.member_finding_ids) {
      if (used.contains(id)) {
        warnings.push_back(where + ": finding " + id + " already belongs to another theme; removed");
      } else if (std::find(members.begin(), members.end(), id) == members.end()) {
        members.push_back(std::move(id));
      }
    }
    if (members.empty()) {
      warnings.push_back(where + " dropped: no members");
      continue;
    }
    used.insert(members.begin(), members.end());
    theme.member_finding_ids = std::move(members);
    out.push_back(std::move(theme));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].theme_id = "TH" + std::to_string(i + 1);
  return out;
}

QualityScorecard parse_scores(const json& doc, std::vector<std::string>& warnings) {
  if (!doc.is_object()) throw SchemaViolation{"scores response must be a JSON object"};
  const auto& scores = require(doc, "scores", &json::is_object, "an object");
  const json rationale = doc.contains("rationale") && doc["rationale"].is_object() ? doc["rationale"] : json::object();
  QualityScorecard card;
  for (auto dim : kDimensions) {
    const std::string key(to_string(dim));
    auto it = scores.find(key);
    if (it == scores.end() || !it->is_number()) throw SchemaViolation{"missing numeric score for '" + key + "'"};
    double value = it->get<double>();
    if (value < 0.0 || value > 1.0) {
      const double clamped = std::clamp(value, 0.0, 1.0);
      warnings.push_back("score " + key + "=" + util::format_fixed(value, 3) + " clamped to " +
                         util::format_fixed(clamped, 1));
      value = clamped;
    }
    card.scores[dim] = value;
    auto r = rationale.find(key);
    card.rationale[dim] = r != rationale.end() && r->is_string() ? r->get<std::string>() : std::string{};
  }
  return card;
}

Synthesis parse_synthesis(const json& doc) {
  if (!doc.is_object()) throw SchemaViolation{"summary response must be a JSON object"};
  Synthesis out;
  out.summary = require(doc, "summary", &json::is_string, "a string");
  out.key_insights = string_list(doc, "key_insights");
  out.fix_recommendations = string_list(doc, "fix_recommendations");
  return out;
}

backend::ResponseSchema schema_for(Stage stage) {
  switch (stage) {
    case Stage::identify: return backend::ResponseSchema::findings;
    case Stage::theme: return backend::ResponseSchema::themes;
    case Stage::score: return backend::ResponseSchema::scores;
    case Stage::synthesize: return backend::ResponseSchema::summary;
  }
  return backend::ResponseSchema::findings;
}

}  // namespace

StageOutput execute_stage(Stage stage, const StagePlan& plan, const StageContext& ctx,
                          const AnalysisReport& prior, std::vector<std::string>& warnings, int* repairs) {
  if (plan.stage != stage) throw InvariantError("plan belongs to a different stage");
  const auto prompt = prompts::execute_prompt(stage, plan, ctx, prior);
  // Item-level warnings from a rejected first response must not leak.
  std::vector<std::string> local;
  auto output = call_structured(ctx, stage, "execute", schema_for(stage), prompt, ctx.config.execute_temperature,
                                repairs, [&](const json& doc) -> StageOutput {
                                  local.clear();
                                  switch (stage) {
                                    case Stage::identify: return parse_findings(doc, ctx, local);
                                    case Stage::theme: return parse_themes(doc, prior, local);
                                    case Stage::score: return parse_scores(doc, local);
                                    case Stage::synthesize: return parse_synthesis(doc);
                                  }
                                  throw SchemaViolation{"unknown stage"};
                                });
  warnings.insert(warnings.end(), local.begin(), local.end());
  return output;
}

// ---------------------------------------------------------------------------

std::string memory_query(const trace::TraceTree& tree) {
  std::vector<const trace::SpanRecord*> spans;
  for (const auto& [id, node] : tree.nodes) spans.push_back(&node.span);
  std::sort(spans.begin(), spans.end(), [](const auto* a, const auto* b) {
    return std::tie(a->start_ns, a->span_id) < std::tie(b->start_ns, b->span_id);
  });
  std::string errors;
  std::string names;
  std::set<std::string> seen;
  for (const auto* span : spans) {
    if (span->status == trace::SpanStatus::error) errors += " " + span->name;
    if (seen.insert(span->name).second && seen.size() <= 50) names += " " + span->name;
  }
  return util::collapse_spaces("error spans:" + errors + "; spans:" + names);
}

PipelineOutcome run_pipeline(const trace::TraceTree& tree, const PipelineDeps& deps, const PipelineConfig& config) {
  PipelineOutcome outcome;
  auto& report = outcome.report;
  auto clock = config.make_clock ? config.make_clock() : logical_clock();

  report.trace_id = tree.trace_id;
  report.trace_start_ns = std::numeric_limits<std::int64_t>::max();
  report.trace_end_ns = std::numeric_limits<std::int64_t>::min();
  for (const auto& [id, node] : tree.nodes) {
    report.trace_start_ns = std::min(report.trace_start_ns, node.span.start_ns);
    report.trace_end_ns = std::max(report.trace_end_ns, node.span.end_ns);
  }
  report.metadata.backend_id = deps.backend.id();
  report.metadata.taxonomy_version = deps.taxonomy.version();

  const auto outline = trace::serialize_outline(tree, config.truncation_limit);

  const bool use_memory = config.memory_enabled && deps.memory && deps.embedder;
  report.metadata.memory_enabled = use_memory;
  std::string memory_text;
  if (use_memory) {
    auto ctx = memory::retrieve_context(*deps.memory, *deps.embedder, memory_query(tree), config.memory_k,
                                        config.memory_budget_chars, tree.trace_id);
    memory_text = ctx.rendered_text;
    for (auto& w : ctx.warnings) outcome.diagnostics.push_back("memory: " + w);
  }
  report.metadata.memory_context = memory_text;

  StageContext ctx{deps.backend, deps.taxonomy, config, tree, outline, tree.trace_id, memory_text};

  for (auto stage : kStages) {
    StageRecord record;
    record.stage = stage;
    record.started_at = clock();
    try {
      const auto plan = plan_stage(stage, ctx, report, record.warnings, &record.repairs);
      record.focus = plan.focus_outline_numbers;
      auto output = execute_stage(stage, plan, ctx, report, record.warnings, &record.repairs);
      switch (stage) {
        case Stage::identify: report.findings = std::get<std::vector<ErrorFinding>>(std::move(output)); break;
        case Stage::theme: report.themes = std::get<std::vector<ThemeGroup>>(std::move(output)); break;
        case Stage::score: {
          report.scorecard = std::get<QualityScorecard>(std::move(output));
          const auto agg = aggregate_and_prioritize(*report.scorecard, report.findings, config.policy);
          report.aggregate_score = agg.score;
          report.priority = agg.priority;
          break;
        }
        case Stage::synthesize: {
          auto synthesis = std::get<Synthesis>(std::move(output));
          report.summary = std::move(synthesis.summary);
          report.key_insights = std::move(synthesis.key_insights);
          report.fix_recommendations = std::move(synthesis.fix_recommendations);
          break;
        }
      }
    } catch (const Error& e) {
      record.finished_at = clock();
      report.metadata.stages.push_back(std::move(record));
      report.status = "failed_at_" + std::string(to_string(stage));
      report.error = e.what();
      break;
    }
    record.finished_at = clock();
    report.metadata.stages.push_back(std::move(record));
  }

  if (use_memory) {
    try {
      memory::record_episodic(*deps.memory, report);
    } catch (const Error& e) {
      outcome.diagnostics.push_back(std::string("memory: ") + e.what());
    }
  }
  return outcome;
}

}  // namespace compass::pipeline
