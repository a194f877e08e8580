#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "compass/error.hpp"
#include "compass/fixtures.hpp"
#include "compass/pipeline.hpp"
#include "support/test_env.hpp"

namespace compass::fixtures {
namespace {

const taxonomy::Taxonomy& tax() { return taxonomy::default_taxonomy(); }

taxonomy::TaxonomyMapping trail() { return taxonomy::load_mapping(testing::read_source("config/trail_mapping.json"), tax()); }

FaultSpec fault(const char* type, FaultTarget target, int count = 1) {
  FaultSpec f;
  f.error_type = taxonomy::resolve_error_type(tax(), type);
  f.target = target;
  f.count = count;
  return f;
}

TEST(SplitMix64, ReferenceSequence) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(GenerateTrace, ErrorFreeShape) {
  const auto g = generate_trace(7, {}, {}, trail());
  EXPECT_EQ(g.spans.size(), 1u + 2u + 4u + 2u);
  EXPECT_TRUE(g.faults.empty());
  EXPECT_DOUBLE_EQ(g.human_score, 1.0);
  const auto ann = nlohmann::json::parse(g.annotation_json());
  EXPECT_TRUE(ann["traces"][0]["errors"].empty());
  for (const auto& s : g.spans) EXPECT_EQ(s.status, trace::SpanStatus::ok);
  EXPECT_EQ(g.trace_id.size(), 32u);
}

TEST(GenerateTrace, OutputParsesIntoOneTree) {
  const auto g = generate_trace(7, {4, 3, 5}, {}, trail());
  const auto spans = trace::parse_trace_file(g.trace_json(), trace::TraceFormat::flat_json);
  EXPECT_EQ(spans, g.spans);
  const auto tree = trace::build_trace_tree(spans);
  EXPECT_EQ(tree.roots.size(), 1u);
  EXPECT_EQ(tree.orphan_count, 0u);
  EXPECT_EQ(tree.size(), 1u + 3u + 9u + 27u + 5u);
  for (const auto& [id, node] : tree.nodes) EXPECT_LE(node.span.start_ns, node.span.end_ns);
}

TEST(GenerateTrace, RateLimitFaultAnnotated) {
  const auto g = generate_trace(7, {}, {fault("Rate Limit", FaultTarget::tool_span)}, trail());
  ASSERT_EQ(g.faults.size(), 1u);
  EXPECT_EQ(g.faults[0].label, "Rate Limiting");
  const auto ann = nlohmann::json::parse(g.annotation_json());
  ASSERT_EQ(ann["traces"][0]["errors"].size(), 1u);
  EXPECT_EQ(ann["traces"][0]["errors"][0]["category"], "Rate Limiting");
  EXPECT_EQ(ann["traces"][0]["errors"][0]["span_id"], g.faults[0].span_id);
  EXPECT_DOUBLE_EQ(g.human_score, 0.9);
  const auto it = std::find_if(g.spans.begin(), g.spans.end(), [&](const auto& s) { return s.span_id == g.faults[0].span_id; });
  ASSERT_NE(it, g.spans.end());
  EXPECT_EQ(it->kind, trace::SpanKind::tool);
  EXPECT_EQ(it->status, trace::SpanStatus::error);
  EXPECT_EQ(g.faults[0].evidence, it->name + " failed");
}

TEST(GenerateTrace, SameSeedByteIdentical) {
  const std::vector<FaultSpec> faults{fault("Rate Limit", FaultTarget::tool_span), fault("Goal Drift", FaultTarget::llm_span)};
  const auto a = generate_trace(11, {}, faults, trail());
  const auto b = generate_trace(11, {}, faults, trail());
  EXPECT_EQ(a.trace_json(), b.trace_json());
  EXPECT_EQ(a.annotation_json(), b.annotation_json());
  EXPECT_NE(generate_trace(12, {}, faults, trail()).trace_json(), a.trace_json());
}

TEST(GenerateTrace, CopiesUseDistinctSpans) {
  const auto g = generate_trace(3, {}, {fault("Goal Drift", FaultTarget::llm_span, 4)}, trail());
  std::set<std::string> spans;
  for (const auto& f : g.faults) spans.insert(f.span_id);
  EXPECT_EQ(spans.size(), 4u);
  EXPECT_NEAR(g.human_score, 0.6, 1e-12);
}

TEST(GenerateTrace, MissingTargetIsGenerationError) {
  EXPECT_THROW(generate_trace(1, {3, 2, 0}, {fault("Rate Limit", FaultTarget::tool_span)}, trail()), GenerationError);
  EXPECT_THROW(generate_trace(1, {0, 2, 2}, {}, trail()), GenerationError);
  EXPECT_THROW(generate_trace(1, {40, 2, 0}, {}, trail()), GenerationError);
}

TEST(LoadFaults, ExampleFile) {
  const auto faults = load_faults(testing::read_source("config/faults.example.json"), tax());
  ASSERT_EQ(faults.size(), 3u);
  EXPECT_EQ(faults[0].error_type.leaf, "Rate Limit");
  EXPECT_EQ(faults[2].target, FaultTarget::llm_span);
  EXPECT_THROW(load_faults(R"([{"error_type":"Nope Nope","target":"tool_span"}])", tax()), UnknownErrorTypeError);
  EXPECT_THROW(load_faults(R"([{"error_type":"Rate Limit","target":"disk"}])", tax()), SchemaError);
}

TEST(OracleScript, PipelineReportsExactlyTheInjectedFaults) {
  const auto faults = load_faults(testing::read_source("config/faults.example.json"), tax());
  const auto g = generate_trace(5, {}, faults, trail());
  const auto script = build_oracle_script(g);
  EXPECT_EQ(script.size(), 8u);
  backend::ScriptedBackend backend(script);
  const auto tree = trace::build_trace_tree(g.spans);
  const auto r = pipeline::run_pipeline(tree, {backend, tax()}).report;
  ASSERT_EQ(r.status, "completed") << r.error.value_or("");
  ASSERT_EQ(r.findings.size(), g.faults.size());
  for (std::size_t i = 0; i < g.faults.size(); ++i) {
    EXPECT_EQ(r.findings[i].span_id, g.faults[i].span_id);
    EXPECT_EQ(r.findings[i].error_type, g.faults[i].error_type);
  }
  for (const auto& stage : r.metadata.stages) EXPECT_TRUE(stage.warnings.empty());
}

}  // namespace
}  // namespace compass::fixtures
