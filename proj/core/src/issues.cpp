#include <algorithm>
#include <map>
#include <set>

#include "compass/clustering.hpp"
#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::clustering {

std::vector<FindingRef> collect_findings(std::span<const pipeline::AnalysisReport> reports) {
  std::vector<FindingRef> out;
  for (const auto& r : reports) {
    for (const auto& f : r.findings) out.push_back({r.trace_id, f.finding_id});
  }
  return out;
}

std::vector<Issue> emit_issues(std::span<const pipeline::AnalysisReport> reports, const ClusteringResult& result,
                               std::span<const FindingRef> embedding_order) {
  if (embedding_order.size() != result.labels.size()) {
    throw InvariantError("embedding order does not match the clustering result");
  }
  std::map<std::string, const pipeline::AnalysisReport*> by_trace;
  for (const auto& r : reports) by_trace.emplace(r.trace_id, &r);
  auto lookup = [&](const FindingRef& ref) -> std::pair<const pipeline::AnalysisReport*, const pipeline::ErrorFinding*> {
    auto it = by_trace.find(ref.trace_id);
    if (it == by_trace.end()) throw InvariantError("no report for trace " + ref.trace_id);
    for (const auto& f : it->second->findings) {
      if (f.finding_id == ref.finding_id) return {it->second, &f};
    }
    throw InvariantError("no finding " + ref.finding_id + " in trace " + ref.trace_id);
  };

  std::vector<Issue> issues;
  for (int c = 0; c < result.n_clusters; ++c) {
    Issue issue;
    std::map<std::string, std::size_t> type_counts;
    std::map<std::string, taxonomy::ErrorTypeId> types;
    std::set<std::string> traces;
    double best_prob = -1.0;
    bool first = true;
    for (std::size_t p = 0; p < result.labels.size(); ++p) {
      if (result.labels[p] != c) continue;
      const auto& ref = embedding_order[p];
      const auto [report, finding] = lookup(ref);
      issue.members.push_back(ref);
      traces.insert(ref.trace_id);
      ++type_counts[finding->error_type.path];
      types.emplace(finding->error_type.path, finding->error_type);
      if (result.probabilities[p] > best_prob) {
        best_prob = result.probabilities[p];
        issue.representative_evidence = finding->evidence;
      }
      if (first) {
        issue.first_seen = issue.last_seen = report->trace_start_ns;
        first = false;
      } else {
        issue.first_seen = std::min(issue.first_seen, report->trace_start_ns);
        issue.last_seen = std::max(issue.last_seen, report->trace_start_ns);
      }
    }
    if (issue.members.empty()) continue;
    // std::map iterates paths ascending, so strict > keeps the smallest path on ties.
    std::string dominant;
    std::size_t top = 0;
    for (const auto& [path, count] : type_counts) {
      if (count > top) {
        top = count;
        dominant = path;
      }
    }
    issue.dominant_error_type = types.at(dominant);
    issue.trace_count = traces.size();
    issue.title = issue.dominant_error_type.leaf + ": " + std::to_string(issue.members.size()) +
                  " occurrences across " + std::to_string(issue.trace_count) + " traces";
    auto sorted = issue.members;
    std::sort(sorted.begin(), sorted.end());
    std::string key;
    for (const auto& m : sorted) key += m.trace_id + "/" + m.finding_id + "\n";
    issue.issue_id = "ISS-" + util::to_hex(util::fnv1a64(key));
    issues.push_back(std::move(issue));
  }
  return issues;
}

IssueRun cluster_reports(std::span<const pipeline::AnalysisReport> reports, embedding::Embedder& embedder,
                         const ClusterParams& params) {
  IssueRun run;
  run.order = collect_findings(reports);
  std::vector<embedding::Vector> points;
  points.reserve(run.order.size());
  for (const auto& r : reports) {
    for (const auto& f : r.findings) points.push_back(embedder.embed(featurize_finding(f)));
  }
  run.result = soft_assign_noise(points, hdbscan(points, params), params);
  run.issues = emit_issues(reports, run.result, run.order);
  return run;
}

nlohmann::json issue_to_json(const Issue& issue) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : issue.members) members.push_back({{"trace_id", m.trace_id}, {"finding_id", m.finding_id}});
  return {{"issue_id", issue.issue_id},
          {"title", issue.title},
          {"members", members},
          {"dominant_error_type", issue.dominant_error_type.path},
          {"trace_count", issue.trace_count},
          {"first_seen", issue.first_seen},
          {"last_seen", issue.last_seen},
          {"representative_evidence", issue.representative_evidence}};
}

std::string dump_issues(std::span<const Issue> issues) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& i : issues) doc.push_back(issue_to_json(i));
  return doc.dump(2) + "\n";
}

std::string render_triage_markdown(std::span<const Issue> issues, std::size_t residual_noise) {
  std::vector<const Issue*> sorted;
  for (const auto& i : issues) sorted.push_back(&i);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Issue* a, const Issue* b) { return a->trace_count > b->trace_count; });
  std::string out = "# Issue triage\n\n";
  if (sorted.empty()) out += "No recurring issues.\n";
  std::size_t group = 0;
  for (const auto* issue : sorted) {
    if (issue->trace_count != group) {
      group = issue->trace_count;
      out += "## Seen in " + std::to_string(group) + (group == 1 ? " trace\n\n" : " traces\n\n");
    }
    out += "### " + issue->issue_id + " " + issue->title + "\n\n";
    out += "- Type: " + issue->dominant_error_type.path + "\n";
    out += "- Evidence: `" + issue->representative_evidence + "`\n";
    out += "- Members:";
    for (std::size_t i = 0; i < issue->members.size(); ++i) {
      out += (i ? ", " : " ") + issue->members[i].trace_id + "/" + issue->members[i].finding_id;
    }
    out += "\n\n";
  }
  out += "Unclustered findings: " + std::to_string(residual_noise) + "\n";
  return out;
}

}  // namespace compass::clustering
