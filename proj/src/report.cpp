#include "fakescope/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace fakescope {

using nlohmann::json;

std::string_view to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::Structured: return "structured";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Table: return "table";
  }
  return "structured";
}

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "structured" || text == "json") return ReportFormat::Structured;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "table") return ReportFormat::Table;
  throw Error(ErrorCode::Parse, "unknown report format '" + std::string(text) + "'");
}

std::string_view file_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::Structured: return "json";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Table: return "txt";
  }
  return "json";
}

namespace {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

// Rounds num/den half-up in exact integer arithmetic, so a ratio sitting on a
// rounding midpoint is not pulled down by its binary approximation.
std::string ratio(int num, int den, int decimals) {
  if (den <= 0) return fixed(0.0, decimals);
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const long long q = (2 * static_cast<long long>(num) * scale + den) / (2LL * den);
  std::string frac = std::to_string(q % scale);
  frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
  return std::to_string(q / scale) + (decimals > 0 ? "." + frac : "");
}

std::string acc_all(const AccuracyRow& r, int d) { return ratio(r.correct(), r.total(), d); }
std::string acc_real(const AccuracyRow& r, int d) { return ratio(r.correct_real, r.n_real, d); }
std::string acc_generated(const AccuracyRow& r, int d) {
  return ratio(r.correct_generated, r.n_generated, d);
}

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\n";
}

// Left-aligned first column, right-aligned others, two spaces between columns.
std::string text_table(const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c == 0) {
        out += cells[c] + pad;
      } else {
        out += "  " + pad + cells[c];
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

const std::vector<std::string> kAccuracyCsvHeader = {
    "method", "all", "real", "generated", "n_real", "n_generated", "rejections"};
const std::vector<std::string> kAccuracyTableHeader = {"Method", "All", "Real", "Generated",
                                                       "Rejections"};

std::vector<std::string> accuracy_csv(const AccuracyRow& r) {
  return {r.name,
          acc_all(r, 4),
          acc_real(r, 4),
          acc_generated(r, 4),
          std::to_string(r.n_real),
          std::to_string(r.n_generated),
          std::to_string(r.rejections)};
}

std::vector<std::string> accuracy_cells(const AccuracyRow& r) {
  return {r.name, acc_all(r, 3), acc_real(r, 3), acc_generated(r, 3),
          std::to_string(r.rejections)};
}

std::string render_rows(const std::vector<AccuracyRow>& rows, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    std::string out = csv_line(kAccuracyCsvHeader);
    for (const auto& r : rows) out += csv_line(accuracy_csv(r));
    return out;
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) cells.push_back(accuracy_cells(r));
  return text_table(kAccuracyTableHeader, cells);
}

std::vector<AccuracyRow> metric_rows(const Metrics& m) {
  std::vector<AccuracyRow> rows = m.per_strategy;
  if (m.overall.total() > 0) {
    AccuracyRow final_row = m.overall;
    final_row.name = "Final (" + std::string(to_string(m.mode)) + ")";
    rows.push_back(std::move(final_row));
  }
  return rows;
}

}  // namespace

json to_json_value(const AccuracyRow& r) {
  return json{{"name", r.name},
              {"all", r.acc_all()},
              {"real", r.acc_real()},
              {"generated", r.acc_generated()},
              {"n_real", r.n_real},
              {"n_generated", r.n_generated},
              {"correct_real", r.correct_real},
              {"correct_generated", r.correct_generated},
              {"rejections", r.rejections}};
}

json to_json_value(const Metrics& m) {
  json rows = json::array();
  for (const auto& r : m.per_strategy) rows.push_back(to_json_value(r));
  return json{{"wording", to_string(m.wording)},
              {"mode", to_string(m.mode)},
              {"n_real", m.n_real()},
              {"n_generated", m.n_generated()},
              {"rejections", m.rejections()},
              {"overall", to_json_value(m.overall)},
              {"rows", rows}};
}

json to_json_value(const AblationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(to_json_value(r));
  return json{{"kind", report.kind == AblationKind::Vote ? "vote" : "fusion"}, {"rows", rows}};
}

json to_json_value(const ConflictMatrix& m) {
  json percent = json::array();
  json disagree = json::array();
  json comparable = json::array();
  for (std::size_t i = 0; i < 6; ++i) {
    json p = json::array();
    for (std::size_t j = 0; j < 6; ++j) p.push_back(m.percent(i, j));
    percent.push_back(p);
    disagree.push_back(m.disagree[i]);
    comparable.push_back(m.comparable[i]);
  }
  return json{{"strategies", {"P1", "P2", "P3", "P4", "P5", "P6"}},
              {"percent", percent},
              {"disagree", disagree},
              {"comparable", comparable},
              {"images", m.images},
              {"images_with_conflict", m.images_with_conflict},
              {"any_conflict_rate", m.any_conflict_rate()}};
}

json to_json_value(const ConflictReport& report) {
  json runs = json::array();
  std::vector<ConflictMatrix> matrices;
  for (const auto& [name, m] : report.runs) {
    json entry = to_json_value(m);
    entry["run"] = name;
    runs.push_back(entry);
    matrices.push_back(m);
  }
  return json{{"runs", runs}, {"pooled", to_json_value(pool(matrices))}};
}

json to_json_value(const TimingProfile& profile) {
  json rows = json::array();
  for (const auto& r : profile.rows) {
    rows.push_back(json{{"name", r.name}, {"mean_seconds", r.mean_seconds}, {"images", r.images}});
  }
  return json{{"rows", rows}};
}

json to_json_value(const SweepResult& sweep) {
  json cells = json::array();
  for (const auto& c : sweep.cells) {
    cells.push_back(json{{"real", c.real_id},
                         {"fake", c.fake_id},
                         {"accuracy", to_json_value(c.accuracy)},
                         {"delta_all", c.delta_all}});
  }
  return json{{"control", to_json_value(sweep.control)}, {"cells", cells}};
}

json to_json_value(std::span<const KeywordCount> counts) {
  json rows = json::array();
  for (const auto& c : counts) rows.push_back(json{{"phrase", c.phrase}, {"count", c.count}});
  return json{{"keywords", rows}};
}

std::string render_report(const Metrics& metrics, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(metrics));
  return render_rows(metric_rows(metrics), format);
}

std::string render_report(const AblationReport& report, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(report));
  return render_rows(report.rows, format);
}

std::string render_report(const ConflictReport& report, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(report));
  std::vector<std::pair<std::string, ConflictMatrix>> blocks = report.runs;
  if (!blocks.empty()) {
    std::vector<ConflictMatrix> matrices;
    for (const auto& [name, m] : report.runs) matrices.push_back(m);
    blocks.emplace_back("pooled", pool(matrices));
  }
  const std::vector<std::string> names = {"P1", "P2", "P3", "P4", "P5", "P6"};
  if (format == ReportFormat::Csv) {
    std::string out = csv_line({"run", "strategy", "P1", "P2", "P3", "P4", "P5", "P6", "images",
                                "any_conflict_pct"});
    for (const auto& [name, m] : blocks) {
      for (std::size_t i = 0; i < 6; ++i) {
        std::vector<std::string> row = {name, names[i]};
        for (std::size_t j = 0; j < 6; ++j) row.push_back(fixed(m.percent(i, j), 2));
        row.push_back(std::to_string(m.images));
        row.push_back(fixed(m.any_conflict_rate(), 2));
        out += csv_line(row);
      }
    }
    return out;
  }
  std::vector<std::string> header = {"Strategy"};
  header.insert(header.end(), names.begin(), names.end());
  if (blocks.empty()) return text_table(header, {});
  std::string out;
  for (const auto& [name, m] : blocks) {
    if (!out.empty()) out += "\n";
    out += "Run " + name + ": " + std::to_string(m.images) + " images, " +
           fixed(m.any_conflict_rate(), 2) + "% with at least one conflict\n";
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<std::string> row = {names[i]};
      for (std::size_t j = 0; j < 6; ++j) row.push_back(fixed(m.percent(i, j), 2));
      rows.push_back(row);
    }
    out += text_table(header, rows);
  }
  return out;
}

std::string render_report(const TimingProfile& profile, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(profile));
  if (format == ReportFormat::Csv) {
    std::string out = csv_line({"method", "mean_seconds", "images"});
    for (const auto& r : profile.rows) {
      out += csv_line({r.name, fixed(r.mean_seconds, 4), std::to_string(r.images)});
    }
    return out;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : profile.rows) {
    rows.push_back({r.name, r.images ? fixed(r.mean_seconds, 2) : "-", std::to_string(r.images)});
  }
  return text_table({"Method", "Seconds/image", "Images"}, rows);
}

std::string render_report(const SweepResult& sweep, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(sweep));
  const bool empty = sweep.cells.empty() && sweep.control.total() == 0;
  if (format == ReportFormat::Csv) {
    std::string out = csv_line({"real", "fake", "all", "real_acc", "generated_acc", "delta_all"});
    if (empty) return out;
    const auto& c = sweep.control;
    out += csv_line({"", "", acc_all(c, 4), acc_real(c, 4),
                     acc_generated(c, 4), fixed(0.0, 4)});
    for (const auto& cell : sweep.cells) {
      const auto& a = cell.accuracy;
      out += csv_line({cell.real_id, cell.fake_id, acc_all(a, 4), acc_real(a, 4),
                       acc_generated(a, 4), fixed(cell.delta_all, 4)});
    }
    return out;
  }
  std::vector<std::vector<std::string>> rows;
  if (!empty) {
    const auto& c = sweep.control;
    rows.push_back({"(zero-shot)", "(zero-shot)", acc_all(c, 3), acc_real(c, 3),
                    acc_generated(c, 3), "-"});
    for (const auto& cell : sweep.cells) {
      const auto& a = cell.accuracy;
      const std::string sign = cell.delta_all >= 0 ? "+" : "";
      rows.push_back({cell.real_id, cell.fake_id, acc_all(a, 3), acc_real(a, 3),
                      acc_generated(a, 3), sign + fixed(100.0 * cell.delta_all, 2) + "%"});
    }
  }
  return text_table({"Real exemplar", "Fake exemplar", "All", "Real", "Generated", "Delta"}, rows);
}

std::string render_report(std::span<const KeywordCount> counts, ReportFormat format) {
  if (format == ReportFormat::Structured) return json_text(to_json_value(counts));
  if (format == ReportFormat::Csv) {
    std::string out = csv_line({"phrase", "count"});
    for (const auto& c : counts) out += csv_line({c.phrase, std::to_string(c.count)});
    return out;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : counts) rows.push_back({c.phrase, std::to_string(c.count)});
  return text_table({"Phrase", "Count"}, rows);
}

std::string render_wording_report(std::span<const Metrics> runs, ReportFormat format) {
  if (format == ReportFormat::Structured) {
    json rows = json::array();
    for (const auto& m : runs) {
      json row = to_json_value(m.overall);
      row["wording"] = to_string(m.wording);
      rows.push_back(row);
    }
    return json_text(json{{"rows", rows}});
  }
  if (format == ReportFormat::Csv) {
    std::string out = csv_line({"wording", "all", "real", "generated", "rejections"});
    for (const auto& m : runs) {
      const auto& r = m.overall;
      out += csv_line({std::string(to_string(m.wording)), acc_all(r, 4),
                       acc_real(r, 4), acc_generated(r, 4),
                       std::to_string(r.rejections)});
    }
    return out;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : runs) {
    const auto& r = m.overall;
    rows.push_back({std::string(to_string(m.wording)), acc_all(r, 3), acc_real(r, 3),
                    acc_generated(r, 3), std::to_string(r.rejections)});
  }
  return text_table({"Wording", "All", "Real", "Generated", "Rejections"}, rows);
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fakescope
