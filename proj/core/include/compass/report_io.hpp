#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "compass/pipeline.hpp"

namespace compass::pipeline {

nlohmann::json finding_to_json(const ErrorFinding& finding);
nlohmann::json theme_to_json(const ThemeGroup& theme);
nlohmann::json scorecard_to_json(const QualityScorecard& scorecard);
nlohmann::json report_to_json(const AnalysisReport& report);

// Two-space indented JSON with sorted keys and a trailing newline.
std::string dump_report(const AnalysisReport& report);

// When `taxonomy` is given every error type must resolve in it; otherwise
// the path is split into its three components.
AnalysisReport report_from_json(const nlohmann::json& doc, const taxonomy::Taxonomy* taxonomy = nullptr);
AnalysisReport parse_report(std::string_view bytes, const taxonomy::Taxonomy* taxonomy = nullptr);

std::string render_markdown(const AnalysisReport& report);

}  // namespace compass::pipeline
