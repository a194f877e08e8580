#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "compass/pipeline.hpp"
#include "compass/taxonomy.hpp"

namespace compass::eval {

struct AnnotatedError {
  std::string span_id;
  std::string category;  // external label

  auto operator<=>(const AnnotatedError&) const = default;
};

struct TraceTruth {
  std::string trace_id;
  std::optional<double> human_score;
  std::vector<AnnotatedError> errors;
};

struct GroundTruth {
  std::vector<TraceTruth> traces;  // file order

  const TraceTruth* find(std::string_view trace_id) const;
  std::size_t error_count() const;
};

// `{traces:[{trace_id, human_score, errors:[{span_id, category}]}]}`.
// Labels outside mapping.external_labels() are a SchemaError.
GroundTruth load_ground_truth(std::string_view bytes, const taxonomy::TaxonomyMapping& mapping);

using Prediction = AnnotatedError;

enum class MatchKind { joint, category_only, location_only };
std::string_view to_string(MatchKind kind);

struct MatchedPair {
  std::size_t prediction = 0;  // index into TraceMatch::predictions
  std::size_t truth = 0;       // index into TraceMatch::truths
  MatchKind kind = MatchKind::joint;
};

struct TraceMatch {
  std::string trace_id;
  // Both sorted by (span_id, label) before matching.
  std::vector<Prediction> predictions;
  std::vector<AnnotatedError> truths;
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> unmatched_predictions;
  std::vector<std::size_t> unmatched_truths;
};

struct MatchResult {
  std::vector<TraceMatch> traces;
};

// Greedy one-to-one matching in three tiers: joint, then category_only,
// then location_only. Within a tier pairs are taken in ascending
// (prediction, truth) index order.
TraceMatch match_trace(std::string trace_id, std::vector<Prediction> predictions,
                       std::vector<AnnotatedError> truths);

// Findings are mapped to external labels first. Traces without a report are
// skipped; a report whose trace is not annotated is an InputError.
MatchResult match_predictions(std::span<const pipeline::AnalysisReport> reports, const GroundTruth& gt,
                              const taxonomy::TaxonomyMapping& mapping);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

Counts categorization_counts(const MatchResult& match);

// Micro F1 over label-equal pairs; 1.0 when there is nothing to predict and
// nothing was predicted.
double categorization_f1(const MatchResult& match);
// Fraction of ground-truth errors whose span carries any prediction.
double localization_accuracy(const MatchResult& match);
// Fraction of ground-truth errors matched in the joint tier.
double joint_score(const MatchResult& match);

// Sample Pearson correlation; nullopt when either side has zero variance.
// InputError on length mismatch or fewer than two values.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

struct CategoryStats {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision() const;
  double recall() const;
};

struct MetricsReport {
  double categorization_f1 = 0.0;
  double localization_accuracy = 0.0;
  double joint_score = 0.0;
  std::optional<double> pearson_rho;
  std::size_t rho_pairs = 0;
  std::map<std::string, CategoryStats> per_category;
  std::size_t trace_count = 0;
  std::size_t prediction_count = 0;
  std::size_t truth_count = 0;
  Counts counts;
};

MetricsReport evaluate_run(std::span<const pipeline::AnalysisReport> reports, const GroundTruth& gt,
                           const taxonomy::TaxonomyMapping& mapping);

nlohmann::json metrics_to_json(const MetricsReport& metrics);
// Aligned text table: headline metrics, then per-category precision/recall.
std::string render_metrics_table(const MetricsReport& metrics);

}  // namespace compass::eval
