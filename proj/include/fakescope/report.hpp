#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fakescope/harness.hpp"

namespace fakescope {

enum class ReportFormat { Structured, Csv, Table };

std::string_view to_string(ReportFormat format);
/// Accepts "structured" (or "json"), "csv" and "table".
ReportFormat report_format_from_string(std::string_view text);
/// "json", "csv" or "txt".
std::string_view file_extension(ReportFormat format);

/// Per-run conflict matrices plus their pooled aggregate.
struct ConflictReport {
  std::vector<std::pair<std::string, ConflictMatrix>> runs;
};

nlohmann::json to_json_value(const AccuracyRow& row);
nlohmann::json to_json_value(const Metrics& metrics);
nlohmann::json to_json_value(const AblationReport& report);
nlohmann::json to_json_value(const ConflictMatrix& matrix);
nlohmann::json to_json_value(const ConflictReport& report);
nlohmann::json to_json_value(const TimingProfile& profile);
nlohmann::json to_json_value(const SweepResult& sweep);
nlohmann::json to_json_value(std::span<const KeywordCount> counts);

// Renderers produce identical bytes for identical inputs. Empty inputs give a
// header-only CSV or table.
std::string render_report(const Metrics& metrics, ReportFormat format);
std::string render_report(const AblationReport& report, ReportFormat format);
std::string render_report(const ConflictReport& report, ReportFormat format);
std::string render_report(const TimingProfile& profile, ReportFormat format);
std::string render_report(const SweepResult& sweep, ReportFormat format);
std::string render_report(std::span<const KeywordCount> counts, ReportFormat format);

/// Accuracy and rejections side by side for runs that differ only in wording.
std::string render_wording_report(std::span<const Metrics> runs, ReportFormat format);

/// Writes content to path (creating parent directories) via a temporary file.
void write_text_file(const std::filesystem::path& path, std::string_view content);

template <typename Report>
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, render_report(report, format));
}

}  // namespace fakescope
