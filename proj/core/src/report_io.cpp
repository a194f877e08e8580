#include "compass/report_io.hpp"

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::pipeline {

using nlohmann::json;

json finding_to_json(const ErrorFinding& f) {
  return json{{"finding_id", f.finding_id},
              {"span_id", f.span_id},
              {"span_name", f.span_name},
              {"outline_number", f.outline_number},
              {"error_type", f.error_type.path},
              {"severity", to_string(f.severity)},
              {"evidence", f.evidence},
              {"explanation", f.explanation},
              {"confidence", f.confidence}};
}

json theme_to_json(const ThemeGroup& t) {
  return json{{"theme_id", t.theme_id},
              {"label", t.label},
              {"member_finding_ids", t.member_finding_ids},
              {"causal_note", t.causal_note}};
}

json scorecard_to_json(const QualityScorecard& card) {
  json scores = json::object();
  json rationale = json::object();
  for (const auto& [dim, value] : card.scores) scores[std::string(to_string(dim))] = value;
  for (const auto& [dim, text] : card.rationale) rationale[std::string(to_string(dim))] = text;
  return json{{"dimension_scores", scores}, {"rationale", rationale}};
}

json report_to_json(const AnalysisReport& r) {
  json doc;
  doc["trace_id"] = r.trace_id;
  doc["status"] = r.status;
  doc["error"] = r.error ? json(*r.error) : json(nullptr);
  doc["trace_start_ns"] = r.trace_start_ns;
  doc["trace_end_ns"] = r.trace_end_ns;
  doc["findings"] = json::array();
  for (const auto& f : r.findings) doc["findings"].push_back(finding_to_json(f));
  doc["themes"] = json::array();
  for (const auto& t : r.themes) doc["themes"].push_back(theme_to_json(t));
  doc["scorecard"] = r.scorecard ? scorecard_to_json(*r.scorecard) : json(nullptr);
  doc["aggregate_score"] = r.aggregate_score ? json(*r.aggregate_score) : json(nullptr);
  doc["priority"] = r.priority ? json(to_string(*r.priority)) : json(nullptr);
  doc["summary"] = r.summary;
  doc["key_insights"] = r.key_insights;
  doc["fix_recommendations"] = r.fix_recommendations;

  json stages = json::array();
  for (const auto& s : r.metadata.stages) {
    stages.push_back(json{{"stage", to_string(s.stage)},
                          {"started_at", s.started_at},
                          {"finished_at", s.finished_at},
                          {"focus", s.focus},
                          {"warnings", s.warnings},
                          {"repairs", s.repairs}});
  }
  doc["pipeline_metadata"] = json{{"backend_id", r.metadata.backend_id},
                                  {"taxonomy_version", r.metadata.taxonomy_version},
                                  {"memory_enabled", r.metadata.memory_enabled},
                                  {"memory_context", r.metadata.memory_context},
                                  {"stages", stages}};
  return doc;
}

std::string dump_report(const AnalysisReport& report) { return report_to_json(report).dump(2) + "\n"; }

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw SchemaError("report field '" + field + "' " + what, field);
}

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) bad(key, "is missing");
  return *it;
}

std::string str(const json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) bad(key, "must be a string");
  return v.get<std::string>();
}

std::string str_or(const json& obj, const char* key, std::string fallback = {}) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) bad(key, "must be a string");
  return it->get<std::string>();
}

std::vector<std::string> strings(const json& obj, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) bad(key, "must be an array");
  for (const auto& v : *it) {
    if (!v.is_string()) bad(key, "must contain strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

taxonomy::ErrorTypeId error_type(const std::string& path, const taxonomy::Taxonomy* tax) {
  if (tax) {
    const auto* id = tax->find_path(path);
    if (!id) bad("error_type", "'" + path + "' is not a leaf of taxonomy " + tax->version());
    return *id;
  }
  const auto a = path.find('/');
  const auto b = a == std::string::npos ? a : path.find('/', a + 1);
  if (b == std::string::npos || path.find('/', b + 1) != std::string::npos) {
    bad("error_type", "'" + path + "' is not a Category/Subcategory/ErrorType path");
  }
  return {path, path.substr(0, a), path.substr(a + 1, b - a - 1), path.substr(b + 1)};
}

}  // namespace

AnalysisReport report_from_json(const json& doc, const taxonomy::Taxonomy* tax) {
  if (!doc.is_object()) throw SchemaError("report must be a JSON object", "");
  AnalysisReport r;
  r.trace_id = str(doc, "trace_id");
  r.status = str_or(doc, "status", "completed");
  if (auto e = doc.find("error"); e != doc.end() && e->is_string()) r.error = e->get<std::string>();
  r.trace_start_ns = doc.value("trace_start_ns", std::int64_t{0});
  r.trace_end_ns = doc.value("trace_end_ns", std::int64_t{0});

  if (auto fs = doc.find("findings"); fs != doc.end() && !fs->is_null()) {
    if (!fs->is_array()) bad("findings", "must be an array");
    for (const auto& item : *fs) {
      if (!item.is_object()) bad("findings", "must contain objects");
      ErrorFinding f;
      f.finding_id = str(item, "finding_id");
      f.span_id = str(item, "span_id");
      f.span_name = str_or(item, "span_name");
      f.outline_number = str_or(item, "outline_number");
      f.error_type = error_type(str(item, "error_type"), tax);
      auto sev = parse_severity(str_or(item, "severity", "medium"));
      if (!sev) bad("severity", "is not one of low/medium/high/critical");
      f.severity = *sev;
      f.evidence = str_or(item, "evidence");
      f.explanation = str_or(item, "explanation");
      const auto& c = field(item, "confidence");
      if (!c.is_number()) bad("confidence", "must be a number");
      f.confidence = c.get<double>();
      r.findings.push_back(std::move(f));
    }
  }
  if (auto ts = doc.find("themes"); ts != doc.end() && !ts->is_null()) {
    if (!ts->is_array()) bad("themes", "must be an array");
    for (const auto& item : *ts) {
      ThemeGroup t;
      t.theme_id = str(item, "theme_id");
      t.label = str_or(item, "label");
      t.member_finding_ids = strings(item, "member_finding_ids");
      t.causal_note = str_or(item, "causal_note");
      r.themes.push_back(std::move(t));
    }
  }
  if (auto sc = doc.find("scorecard"); sc != doc.end() && sc->is_object()) {
    QualityScorecard card;
    const auto& scores = field(*sc, "dimension_scores");
    for (const auto& [key, value] : scores.items()) {
      auto dim = parse_dimension(key);
      if (!dim || !value.is_number()) bad("dimension_scores", "has invalid entry '" + key + "'");
      card.scores[*dim] = value.get<double>();
    }
    if (auto rat = sc->find("rationale"); rat != sc->end() && rat->is_object()) {
      for (const auto& [key, value] : rat->items()) {
        if (auto dim = parse_dimension(key); dim && value.is_string()) card.rationale[*dim] = value.get<std::string>();
      }
    }
    r.scorecard = std::move(card);
  }
  if (auto a = doc.find("aggregate_score"); a != doc.end() && a->is_number()) r.aggregate_score = a->get<double>();
  if (auto p = doc.find("priority"); p != doc.end() && p->is_string()) {
    r.priority = parse_severity(p->get<std::string>());
    if (!r.priority) bad("priority", "is not one of low/medium/high/critical");
  }
  r.summary = str_or(doc, "summary");
  r.key_insights = strings(doc, "key_insights");
  r.fix_recommendations = strings(doc, "fix_recommendations");

  if (auto m = doc.find("pipeline_metadata"); m != doc.end() && m->is_object()) {
    r.metadata.backend_id = str_or(*m, "backend_id");
    r.metadata.taxonomy_version = str_or(*m, "taxonomy_version");
    r.metadata.memory_enabled = m->value("memory_enabled", false);
    r.metadata.memory_context = str_or(*m, "memory_context");
    if (auto st = m->find("stages"); st != m->end() && st->is_array()) {
      for (const auto& s : *st) {
        StageRecord rec;
        auto stage = parse_stage(str(s, "stage"));
        if (!stage) bad("stage", "is not a pipeline stage");
        rec.stage = *stage;
        rec.started_at = s.value("started_at", std::int64_t{0});
        rec.finished_at = s.value("finished_at", std::int64_t{0});
        rec.focus = strings(s, "focus");
        rec.warnings = strings(s, "warnings");
        rec.repairs = s.value("repairs", 0);
        r.metadata.stages.push_back(std::move(rec));
      }
    }
  }
  return r;
}

AnalysisReport parse_report(std::string_view bytes, const taxonomy::Taxonomy* tax) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), e.byte);
  }
  return report_from_json(doc, tax);
}

std::string render_markdown(const AnalysisReport& r) {
  std::string out = "# Trace " + r.trace_id + "\n\n";
  out += "- Status: " + r.status + "\n";
  if (r.error) out += "- Error: " + *r.error + "\n";
  if (r.aggregate_score) out += "- Aggregate score: " + util::format_fixed(*r.aggregate_score, 3) + "\n";
  if (r.priority) out += "- Priority: " + std::string(to_string(*r.priority)) + "\n";
  out += "\n";
  if (!r.summary.empty()) out += "## Summary\n\n" + r.summary + "\n\n";

  out += "## Findings\n\n";
  if (r.findings.empty()) out += "No errors found.\n";
  for (const auto& f : r.findings) {
    out += "### " + f.finding_id + " " + f.error_type.leaf + " (" + std::string(to_string(f.severity)) + ")\n\n";
    out += "- Span: " + f.outline_number + " " + f.span_name + " (`" + f.span_id + "`)\n";
    out += "- Type: " + f.error_type.path + "\n";
    out += "- Confidence: " + util::format_fixed(f.confidence, 2) + "\n";
    out += "- Evidence: `" + f.evidence + "`\n";
    if (!f.explanation.empty()) out += "- " + f.explanation + "\n";
    out += "\n";
  }
  if (!r.themes.empty()) {
    out += "## Themes\n\n";
    for (const auto& t : r.themes) {
      out += "- **" + t.label + "** (";
      for (std::size_t i = 0; i < t.member_finding_ids.size(); ++i) {
        out += (i ? ", " : "") + t.member_finding_ids[i];
      }
      out += ")";
      if (!t.causal_note.empty()) out += ": " + t.causal_note;
      out += "\n";
    }
    out += "\n";
  }
  if (r.scorecard) {
    out += "## Scores\n\n| Dimension | Score | Rationale |\n|---|---|---|\n";
    for (const auto& [dim, value] : r.scorecard->scores) {
      auto it = r.scorecard->rationale.find(dim);
      out += "| " + std::string(to_string(dim)) + " | " + util::format_fixed(value, 2) + " | " +
             (it == r.scorecard->rationale.end() ? "" : it->second) + " |\n";
    }
    out += "\n";
  }
  auto list = [&](const char* title, const std::vector<std::string>& items) {
    if (items.empty()) return;
    out += std::string("## ") + title + "\n\n";
    for (const auto& item : items) out += "- " + item + "\n";
    out += "\n";
  };
  list("Key insights", r.key_insights);
  list("Fix recommendations", r.fix_recommendations);
  return out;
}

}  // namespace compass::pipeline
