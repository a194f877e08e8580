#pragma once

// Mixed three-trace evaluation fixture with hand-computed metrics.
//
// Labels A, B, C map from leaves Cat/Sub/LA, LB, LC.
//
//   X  gt {(s1,A),(s2,B)}  pred {(s1,A),(s3,B)}
//      joint (s1,A); category_only (s3,B)-(s2,B)          TP 2 FP 0 FN 0  spans hit 1/2
//   Y  gt {(s1,A)}         pred {(s1,C),(s2,A)}
//      category_only (s2,A)-(s1,A); (s1,C) unmatched       TP 1 FP 1 FN 0  spans hit 1/1
//   Z  gt {(s1,A),(s2,B)}  pred {(s1,B),(s2,C)}
//      category_only (s1,B)-(s2,B); (s2,C) and (s1,A) left  TP 1 FP 1 FN 1  spans hit 2/2
//
//   TP 4, FP 2, FN 1 -> F1 = 8 / (8 + 3) = 8/11
//   Loc = (1 + 1 + 2) / 5 = 4/5, Joint = 1/5

#include <string>
#include <utility>
#include <vector>

#include "compass/evaluation.hpp"
#include "compass/pipeline.hpp"
#include "compass/taxonomy.hpp"

namespace compass::testing {

inline constexpr double kMixedF1 = 8.0 / 11.0;
inline constexpr double kMixedLoc = 4.0 / 5.0;
inline constexpr double kMixedJoint = 1.0 / 5.0;

struct MixedFixture {
  taxonomy::Taxonomy taxonomy{"abc", {{"Cat", {{"Sub", {"LA", "LB", "LC"}}}}}};
  taxonomy::TaxonomyMapping mapping{
      {{"Cat/Sub/LA", "A"}, {"Cat/Sub/LB", "B"}, {"Cat/Sub/LC", "C"}}, {"A", "B", "C"}, std::nullopt, taxonomy};
  std::string annotations = R"({"traces":[
    {"trace_id":"X","human_score":0.9,"errors":[{"span_id":"s1","category":"A"},{"span_id":"s2","category":"B"}]},
    {"trace_id":"Y","human_score":0.5,"errors":[{"span_id":"s1","category":"A"}]},
    {"trace_id":"Z","human_score":0.1,"errors":[{"span_id":"s1","category":"A"},{"span_id":"s2","category":"B"}]}
  ]})";
  std::vector<pipeline::AnalysisReport> reports;

  MixedFixture() {
    add("X", 0.8, {{"s1", "LA"}, {"s3", "LB"}});
    add("Y", 0.6, {{"s1", "LC"}, {"s2", "LA"}});
    add("Z", 0.1, {{"s1", "LB"}, {"s2", "LC"}});
  }

  void add(std::string trace, double aggregate, std::vector<std::pair<std::string, std::string>> preds) {
    pipeline::AnalysisReport r;
    r.trace_id = std::move(trace);
    r.aggregate_score = aggregate;
    for (auto& [span, leaf] : preds) {
      pipeline::ErrorFinding f;
      f.finding_id = "F" + std::to_string(r.findings.size() + 1);
      f.span_id = span;
      f.error_type = *taxonomy.find_path("Cat/Sub/" + leaf);
      r.findings.push_back(f);
    }
    reports.push_back(std::move(r));
  }
};

}  // namespace compass::testing
