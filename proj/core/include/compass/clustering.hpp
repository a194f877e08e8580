#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compass/embedding.hpp"
#include "compass/pipeline.hpp"

namespace compass::clustering {

struct ClusterParams {
  std::size_t min_cluster_size = 3;
  std::size_t min_samples = 2;
  double soft_threshold = 0.6;
  double softmax_temperature = 0.25;

  // ConfigError when out of range.
  void validate() const;
};

struct ClusteringResult {
  std::vector<int> labels;  // -1 = noise
  std::vector<double> probabilities;
  int n_clusters = 0;
  std::map<int, std::vector<std::size_t>> exemplars;
  std::set<std::size_t> soft_assigned;

  bool operator==(const ClusteringResult&) const = default;
};

inline constexpr int kNoise = -1;

// Lambda used for zero distances (duplicate points).
inline constexpr double kMaxLambda = 1e12;

// `<type path> | <explanation> | <evidence>`, whitespace runs collapsed.
std::string featurize_finding(const pipeline::ErrorFinding& finding);

// Euclidean HDBSCAN with excess-of-mass selection. Core distance counts the
// point itself as its own first neighbour. Equal-weight merges are applied
// together, so the hierarchy does not depend on tie order. The root is a
// candidate cluster, which lets a single dense group come out as one cluster.
// Labels are numbered by first occurrence in input order.
ClusteringResult hdbscan(std::span<const embedding::Vector> points, const ClusterParams& params = {});

// Relabels noise points whose exemplar-distance softmax clears the threshold.
ClusteringResult soft_assign_noise(std::span<const embedding::Vector> points, ClusteringResult result,
                                   const ClusterParams& params = {});

// Adjusted Rand index between two labelings; noise counts as its own label.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

struct FindingRef {
  std::string trace_id;
  std::string finding_id;

  auto operator<=>(const FindingRef&) const = default;
};

struct Issue {
  std::string issue_id;
  std::string title;
  std::vector<FindingRef> members;  // input order
  taxonomy::ErrorTypeId dominant_error_type;
  std::size_t trace_count = 0;
  std::int64_t first_seen = 0;
  std::int64_t last_seen = 0;
  std::string representative_evidence;
};

// Every finding of every report, in report then finding order.
std::vector<FindingRef> collect_findings(std::span<const pipeline::AnalysisReport> reports);

// One issue per cluster, in cluster order. `embedding_order[i]` names the
// finding behind point i. first/last_seen are trace start times.
std::vector<Issue> emit_issues(std::span<const pipeline::AnalysisReport> reports, const ClusteringResult& result,
                               std::span<const FindingRef> embedding_order);

struct IssueRun {
  std::vector<FindingRef> order;
  ClusteringResult result;
  std::vector<Issue> issues;
};

// featurize, embed, hdbscan, soft-assign, emit.
IssueRun cluster_reports(std::span<const pipeline::AnalysisReport> reports, embedding::Embedder& embedder,
                         const ClusterParams& params = {});

nlohmann::json issue_to_json(const Issue& issue);
// Two-space indented array with a trailing newline.
std::string dump_issues(std::span<const Issue> issues);
// Triage board, issues sorted by trace_count descending.
std::string render_triage_markdown(std::span<const Issue> issues, std::size_t residual_noise);

}  // namespace compass::clustering
