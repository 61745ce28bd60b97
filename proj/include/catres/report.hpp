#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "catres/pipeline.hpp"

namespace catres {

// Flat "tableN.field" -> value view of the five summaries; the keys accepted
// by a paper-compare file.
std::map<std::string, double> summary_values(const AnalysisReport& report);

// key=value lines, '#' comments. Unknown keys are kept and reported as
// missing from the run.
std::map<std::string, double> load_paper_compare(const std::filesystem::path& path);
std::vector<PaperDelta> compare_with_paper(const AnalysisReport& report, const std::map<std::string, double>& expected);

// Pretty-printed JSON (stable key order, no timestamps).
std::string summary_json(const AnalysisReport& report);
std::string render_table(const AnalysisReport& report, int table);  // 1..5
std::string render_config(const AnalysisReport& report);
std::string render_paper_compare(const std::vector<PaperDelta>& deltas);

// summary.json, table1.txt..table5.txt, config.txt, confluence.csv,
// dispersion_precursor.csv, dispersion_target.csv, distancing.csv,
// partitions.jsonl and, when deltas exist, paper_compare.txt.
std::vector<std::filesystem::path> export_report(const AnalysisReport& report, const std::filesystem::path& dir);

// Shared by the report and bundle writers.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace catres
