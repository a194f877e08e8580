#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "compass/backend.hpp"
#include "compass/error.hpp"
#include "compass/taxonomy.hpp"
#include "compass/trace_model.hpp"

namespace compass::embedding {
class Embedder;
}
namespace compass::memory {
class MemoryStore;
}

namespace compass::pipeline {

enum class Stage { identify, theme, score, synthesize };
inline constexpr std::array kStages = {Stage::identify, Stage::theme, Stage::score, Stage::synthesize};

enum class Severity { low, medium, high, critical };
using Priority = Severity;

enum class Dimension { factual_grounding, safety, plan_execution, tool_use, efficiency };
inline constexpr std::array kDimensions = {Dimension::factual_grounding, Dimension::safety,
                                           Dimension::plan_execution, Dimension::tool_use,
                                           Dimension::efficiency};

std::string_view to_string(Stage stage);
std::string_view to_string(Severity severity);
std::string_view to_string(Dimension dimension);
std::optional<Stage> parse_stage(std::string_view text);
std::optional<Severity> parse_severity(std::string_view text);
std::optional<Dimension> parse_dimension(std::string_view text);

struct StagePlan {
  Stage stage = Stage::identify;
  std::string strategy_text;
  std::vector<std::string> focus_outline_numbers;
};

struct ErrorFinding {
  std::string finding_id;
  std::string span_id;
  std::string span_name;
  std::string outline_number;
  taxonomy::ErrorTypeId error_type;
  Severity severity = Severity::medium;
  std::string evidence;  // verbatim substring of the span's outline section
  std::string explanation;
  double confidence = 0.0;

  bool operator==(const ErrorFinding&) const = default;
};

struct ThemeGroup {
  std::string theme_id;
  std::string label;
  std::vector<std::string> member_finding_ids;
  std::string causal_note;

  bool operator==(const ThemeGroup&) const = default;
};

struct QualityScorecard {
  std::map<Dimension, double> scores;
  std::map<Dimension, std::string> rationale;

  double mean() const;
  bool operator==(const QualityScorecard&) const = default;
};

struct Synthesis {
  std::string summary;
  std::vector<std::string> key_insights;
  std::vector<std::string> fix_recommendations;
};

struct StageRecord {
  Stage stage = Stage::identify;
  std::int64_t started_at = 0;
  std::int64_t finished_at = 0;
  std::vector<std::string> focus;
  std::vector<std::string> warnings;
  int repairs = 0;
};

struct PipelineMetadata {
  std::string backend_id;
  std::string taxonomy_version;
  bool memory_enabled = false;
  std::string memory_context;
  std::vector<StageRecord> stages;
};

struct AnalysisReport {
  std::string trace_id;
  std::string status = "completed";  // or failed_at_<stage>
  std::optional<std::string> error;
  std::int64_t trace_start_ns = 0;
  std::int64_t trace_end_ns = 0;
  std::vector<ErrorFinding> findings;
  std::vector<ThemeGroup> themes;
  std::optional<QualityScorecard> scorecard;
  std::optional<double> aggregate_score;
  std::optional<Priority> priority;
  std::string summary;
  std::vector<std::string> key_insights;
  std::vector<std::string> fix_recommendations;
  PipelineMetadata metadata;

  bool completed() const { return status == "completed"; }
};

// Aggregation knobs. Defaults: penalty max(0.2, 1 - 0.15*critical - 0.05*high),
// priority bands at 0.4 / 0.6 / 0.8, equal dimension weights.
struct PriorityPolicy {
  double critical_penalty = 0.15;
  double high_penalty = 0.05;
  double penalty_floor = 0.2;
  double critical_below = 0.4;
  double high_below = 0.6;
  double medium_below = 0.8;
  std::map<Dimension, double> weights;  // missing dimensions weigh 1
};

struct Aggregate {
  double score = 0.0;
  Priority priority = Priority::low;
};

Aggregate aggregate_and_prioritize(const QualityScorecard& scorecard, std::span<const ErrorFinding> findings,
                                   const PriorityPolicy& policy = {});

using Clock = std::function<std::int64_t()>;

// Counter starting at 0; one tick per call. Used for reproducible reports.
Clock logical_clock();
// Milliseconds since the Unix epoch.
Clock system_clock();

struct PipelineConfig {
  std::size_t truncation_limit = trace::kDefaultTruncationLimit;
  double plan_temperature = 0.2;
  double execute_temperature = 0.2;
  int max_output_tokens = 2048;
  PriorityPolicy policy;
  bool memory_enabled = false;
  std::size_t memory_k = 5;
  std::size_t memory_budget_chars = 1500;
  // Factory so each run gets its own clock; null means logical_clock.
  std::function<Clock()> make_clock;
};

struct PipelineDeps {
  backend::ChatBackend& backend;
  const taxonomy::Taxonomy& taxonomy;
  memory::MemoryStore* memory = nullptr;
  embedding::Embedder* embedder = nullptr;
};

// Everything a single stage call needs to see.
struct StageContext {
  backend::ChatBackend& backend;
  const taxonomy::Taxonomy& taxonomy;
  const PipelineConfig& config;
  const trace::TraceTree& tree;
  const trace::OutlineDocument& outline;
  std::string trace_id;
  std::string memory_context;
};

class StageError : public Error {
 public:
  StageError(Stage stage, std::string phase, const std::string& what);
  Stage stage() const noexcept { return stage_; }
  const std::string& phase() const noexcept { return phase_; }

 private:
  Stage stage_;
  std::string phase_;
};

// Planning phase: asks the model for an explicit strategy. Focus numbers
// missing from the outline are dropped with a warning.
StagePlan plan_stage(Stage stage, const StageContext& ctx, const AnalysisReport& prior,
                     std::vector<std::string>& warnings, int* repairs = nullptr);

using StageOutput = std::variant<std::vector<ErrorFinding>, std::vector<ThemeGroup>, QualityScorecard, Synthesis>;

// Execution phase: hands the plan back as a directive and validates the
// stage output (invalid findings and themes dropped, scores clamped).
StageOutput execute_stage(Stage stage, const StagePlan& plan, const StageContext& ctx,
                          const AnalysisReport& prior, std::vector<std::string>& warnings,
                          int* repairs = nullptr);

struct PipelineOutcome {
  AnalysisReport report;
  // Problems outside the report itself, e.g. a failed memory write.
  std::vector<std::string> diagnostics;
};

PipelineOutcome run_pipeline(const trace::TraceTree& tree, const PipelineDeps& deps,
                             const PipelineConfig& config = {});

// Text used to query memory before analysing `tree`.
std::string memory_query(const trace::TraceTree& tree);

// Prompt construction, exposed for golden-file tests.
namespace prompts {

std::string system_text(Stage stage, std::string_view phase);
std::string plan_prompt(Stage stage, const StageContext& ctx, const AnalysisReport& prior);
std::string execute_prompt(Stage stage, const StagePlan& plan, const StageContext& ctx,
                           const AnalysisReport& prior);
std::string repair_prompt(const std::string& original_prompt, const std::string& bad_response,
                          const std::string& problem);

}  // namespace prompts

}  // namespace compass::pipeline
