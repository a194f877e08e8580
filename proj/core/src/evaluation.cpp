#include "compass/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::eval {

using nlohmann::json;

const TraceTruth* GroundTruth::find(std::string_view trace_id) const {
  for (const auto& t : traces) {
    if (t.trace_id == trace_id) return &t;
  }
  return nullptr;
}

std::size_t GroundTruth::error_count() const {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.errors.size();
  return n;
}

GroundTruth load_ground_truth(std::string_view bytes, const taxonomy::TaxonomyMapping& mapping) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed annotations: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("traces") || !doc["traces"].is_array()) {
    throw SchemaError("annotations require a 'traces' array", "traces");
  }
  GroundTruth gt;
  std::set<std::string> seen;
  const auto& traces = doc["traces"];
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const auto index = static_cast<std::ptrdiff_t>(i);
    if (!t.is_object()) throw SchemaError("trace entry must be an object", "traces", index);
    TraceTruth truth;
    if (!t.contains("trace_id") || !t["trace_id"].is_string()) {
      throw SchemaError("trace entry requires string 'trace_id'", "trace_id", index);
    }
    truth.trace_id = t["trace_id"].get<std::string>();
    if (!seen.insert(truth.trace_id).second) {
      throw SchemaError("duplicate trace_id '" + truth.trace_id + "'", "trace_id", index);
    }
    if (auto h = t.find("human_score"); h != t.end() && !h->is_null()) {
      if (!h->is_number()) throw SchemaError("human_score must be a number", "human_score", index);
      truth.human_score = h->get<double>();
    }
    if (auto errs = t.find("errors"); errs != t.end() && !errs->is_null()) {
      if (!errs->is_array()) throw SchemaError("errors must be an array", "errors", index);
      for (const auto& e : *errs) {
        if (!e.is_object() || !e.contains("span_id") || !e["span_id"].is_string() || !e.contains("category") ||
            !e["category"].is_string()) {
          throw SchemaError("error annotations require string span_id and category", "errors", index);
        }
        AnnotatedError ann{e["span_id"].get<std::string>(), e["category"].get<std::string>()};
        if (!mapping.external_labels().contains(ann.category)) {
          throw SchemaError("unknown category label '" + ann.category + "' in trace " + truth.trace_id, "category",
                            index);
        }
        truth.errors.push_back(std::move(ann));
      }
    }
    gt.traces.push_back(std::move(truth));
  }
  return gt;
}

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::joint: return "joint";
    case MatchKind::category_only: return "category_only";
    case MatchKind::location_only: return "location_only";
  }
  return "joint";
}

TraceMatch match_trace(std::string trace_id, std::vector<Prediction> predictions, std::vector<AnnotatedError> truths) {
  TraceMatch m;
  m.trace_id = std::move(trace_id);
  std::sort(predictions.begin(), predictions.end());
  std::sort(truths.begin(), truths.end());
  m.predictions = std::move(predictions);
  m.truths = std::move(truths);

  std::vector<bool> used_p(m.predictions.size(), false);
  std::vector<bool> used_t(m.truths.size(), false);
  auto tier = [&](MatchKind kind, auto&& qualifies) {
    for (std::size_t i = 0; i < m.predictions.size(); ++i) {
      if (used_p[i]) continue;
      for (std::size_t j = 0; j < m.truths.size(); ++j) {
        if (used_t[j] || !qualifies(m.predictions[i], m.truths[j])) continue;
        used_p[i] = used_t[j] = true;
        m.pairs.push_back({i, j, kind});
        break;
      }
    }
  };
  tier(MatchKind::joint,
       [](const auto& p, const auto& t) { return p.span_id == t.span_id && p.category == t.category; });
  tier(MatchKind::category_only, [](const auto& p, const auto& t) { return p.category == t.category; });
  tier(MatchKind::location_only, [](const auto& p, const auto& t) { return p.span_id == t.span_id; });

  for (std::size_t i = 0; i < used_p.size(); ++i) {
    if (!used_p[i]) m.unmatched_predictions.push_back(i);
  }
  for (std::size_t j = 0; j < used_t.size(); ++j) {
    if (!used_t[j]) m.unmatched_truths.push_back(j);
  }
  return m;
}

MatchResult match_predictions(std::span<const pipeline::AnalysisReport> reports, const GroundTruth& gt,
                              const taxonomy::TaxonomyMapping& mapping) {
  std::vector<std::string> missing;
  for (const auto& r : reports) {
    if (!gt.find(r.trace_id)) missing.push_back(r.trace_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw InputError("reports for traces missing from ground truth: " + ids);
  }
  MatchResult result;
  for (const auto& r : reports) {
    std::vector<Prediction> preds;
    for (const auto& f : r.findings) preds.push_back({f.span_id, taxonomy::map_to_external(mapping, f.error_type)});
    result.traces.push_back(match_trace(r.trace_id, std::move(preds), gt.find(r.trace_id)->errors));
  }
  return result;
}

Counts categorization_counts(const MatchResult& match) {
  Counts c;
  for (const auto& t : match.traces) {
    for (const auto& p : t.pairs) {
      if (p.kind == MatchKind::location_only) {
        ++c.fp;
        ++c.fn;
      } else {
        ++c.tp;
      }
    }
    c.fp += t.unmatched_predictions.size();
    c.fn += t.unmatched_truths.size();
  }
  return c;
}

double categorization_f1(const MatchResult& match) {
  const auto c = categorization_counts(match);
  const auto denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double localization_accuracy(const MatchResult& match) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (const auto& t : match.traces) {
    std::set<std::string> spans;
    for (const auto& p : t.predictions) spans.insert(p.span_id);
    for (const auto& g : t.truths) {
      ++total;
      if (spans.contains(g.span_id)) ++hit;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double joint_score(const MatchResult& match) {
  std::size_t total = 0;
  std::size_t joint = 0;
  for (const auto& t : match.traces) {
    total += t.truths.size();
    for (const auto& p : t.pairs) {
      if (p.kind == MatchKind::joint) ++joint;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(joint) / static_cast<double>(total);
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InputError("pearson: inputs differ in length");
  if (xs.size() < 2) throw InputError("pearson: need at least two values");
  // Exact test: the centred sums of a constant series can round to a tiny
  // nonzero value.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) return std::nullopt;
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double CategoryStats::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double CategoryStats::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

MetricsReport evaluate_run(std::span<const pipeline::AnalysisReport> reports, const GroundTruth& gt,
                           const taxonomy::TaxonomyMapping& mapping) {
  const auto match = match_predictions(reports, gt, mapping);
  MetricsReport m;
  m.categorization_f1 = categorization_f1(match);
  m.localization_accuracy = localization_accuracy(match);
  m.joint_score = joint_score(match);
  m.counts = categorization_counts(match);
  m.trace_count = match.traces.size();
  for (const auto& t : match.traces) {
    m.prediction_count += t.predictions.size();
    m.truth_count += t.truths.size();
    for (const auto& p : t.pairs) {
      if (p.kind == MatchKind::location_only) {
        ++m.per_category[t.predictions[p.prediction].category].fp;
        ++m.per_category[t.truths[p.truth].category].fn;
      } else {
        ++m.per_category[t.truths[p.truth].category].tp;
      }
    }
    for (auto i : t.unmatched_predictions) ++m.per_category[t.predictions[i].category].fp;
    for (auto j : t.unmatched_truths) ++m.per_category[t.truths[j].category].fn;
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& r : reports) {
    const auto* truth = gt.find(r.trace_id);
    if (r.aggregate_score && truth->human_score) {
      xs.push_back(*r.aggregate_score);
      ys.push_back(*truth->human_score);
    }
  }
  m.rho_pairs = xs.size();
  if (xs.size() >= 2) m.pearson_rho = pearson(xs, ys);
  return m;
}

json metrics_to_json(const MetricsReport& m) {
  json per = json::object();
  for (const auto& [label, s] : m.per_category) {
    per[label] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"precision", s.precision()}, {"recall", s.recall()}};
  }
  return {{"categorization_f1", m.categorization_f1},
          {"localization_accuracy", m.localization_accuracy},
          {"joint_score", m.joint_score},
          {"pearson_rho", m.pearson_rho ? json(*m.pearson_rho) : json(nullptr)},
          {"pearson_defined", m.pearson_rho.has_value()},
          {"rho_pairs", m.rho_pairs},
          {"trace_count", m.trace_count},
          {"prediction_count", m.prediction_count},
          {"ground_truth_count", m.truth_count},
          {"tp", m.counts.tp},
          {"fp", m.counts.fp},
          {"fn", m.counts.fn},
          {"per_category", per}};
}

std::string render_metrics_table(const MetricsReport& m) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-8s %-11s %-9s %-9s %-9s %-9s\n", "Traces", "Predictions", "Cat. F1",
                "Loc. Acc.", "Joint", "rho");
  out += line;
  const std::string rho = m.pearson_rho ? util::format_fixed(*m.pearson_rho, 3) : "n/a";
  std::snprintf(line, sizeof line, "%-8zu %-11zu %-9.3f %-9.3f %-9.3f %-9s\n", m.trace_count, m.prediction_count,
                m.categorization_f1, m.localization_accuracy, m.joint_score, rho.c_str());
  out += line;
  if (!m.per_category.empty()) {
    std::size_t width = 8;
    for (const auto& [label, s] : m.per_category) width = std::max(width, label.size());
    out += "\n";
    std::snprintf(line, sizeof line, "%-*s %5s %5s %5s %9s %9s\n", static_cast<int>(width), "Category", "TP", "FP",
                  "FN", "Precision", "Recall");
    out += line;
    for (const auto& [label, s] : m.per_category) {
      std::snprintf(line, sizeof line, "%-*s %5zu %5zu %5zu %9.3f %9.3f\n", static_cast<int>(width), label.c_str(),
                    s.tp, s.fp, s.fn, s.precision(), s.recall());
      out += line;
    }
  }
  return out;
}

}  // namespace compass::eval
