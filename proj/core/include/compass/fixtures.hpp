#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "compass/taxonomy.hpp"
#include "compass/trace_model.hpp"

namespace compass::fixtures {

// SplitMix64. Fixed so generated fixtures match across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform-ish in [0, bound) by modulo; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

struct TraceShape {
  int depth = 3;       // levels of agent/chain/llm spans
  int fanout = 2;      // children per non-leaf span
  int tool_calls = 2;  // tool spans, attached round-robin to the llm leaves
};

enum class FaultTarget { tool_span, llm_span, root };
std::string_view to_string(FaultTarget target);

struct FaultSpec {
  taxonomy::ErrorTypeId error_type;
  FaultTarget target = FaultTarget::tool_span;
  // `{span}` is replaced by the span name and `{n}` by the 1-based copy number.
  std::string payload = "{span} failed";
  int count = 1;
};

// JSON array of `{error_type, target, payload?, count?}`.
std::vector<FaultSpec> load_faults(std::string_view bytes, const taxonomy::Taxonomy& taxonomy);

struct InjectedFault {
  std::string span_id;
  taxonomy::ErrorTypeId error_type;
  std::string label;     // mapped external category
  std::string evidence;  // rendered payload
};

struct GeneratedTrace {
  std::string trace_id;
  std::vector<trace::SpanRecord> spans;
  std::vector<InjectedFault> faults;
  double human_score = 1.0;  // max(0, 1 - 0.1 * faults)

  std::string trace_json() const;
  // `{traces:[...]}` holding this trace alone.
  std::string annotation_json() const;
};

// Span count = sum(fanout^i for i < depth) + tool_calls. Each fault copy goes
// to a distinct span of its target kind while any remain unused. GenerationError
// when a target kind has no spans.
GeneratedTrace generate_trace(std::uint64_t seed, const TraceShape& shape, const std::vector<FaultSpec>& faults,
                              const taxonomy::TaxonomyMapping& mapping);

// One annotations document over several traces.
std::string annotations_json(const std::vector<GeneratedTrace>& traces);

// Scripted-backend responses under which the pipeline reports exactly the
// injected faults.
std::map<std::string, std::string> build_oracle_script(const GeneratedTrace& generated,
                                                       std::size_t truncation_limit = trace::kDefaultTruncationLimit);

}  // namespace compass::fixtures
