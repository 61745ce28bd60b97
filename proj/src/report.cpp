#include "catres/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "catres/error.hpp"
#include "json.hpp"

namespace catres {

namespace {

using nlohmann::ordered_json;

ordered_json test_json(const stats::TestResult& r) {
  ordered_json j;
  j["test"] = stats::to_string(r.test);
  j["skipped"] = r.skipped;
  j["statistic"] = r.statistic;
  j["df"] = r.df ? ordered_json(*r.df) : ordered_json(nullptr);
  j["p_value"] = r.p_value;
  j["log10_p"] = r.log10_p;
  j["notes"] = r.notes;
  return j;
}

// Scientific notation that survives p-values below the double range.
std::string format_p(const stats::TestResult& r) {
  if (r.skipped) return "skipped";
  if (r.p_value >= 1e-300) return fmt::format("{:.2E}", r.p_value);
  const double e = std::floor(r.log10_p);
  double mant = std::pow(10.0, r.log10_p - e);
  double exponent = e;
  if (mant >= 9.995) {
    mant /= 10.0;
    exponent += 1.0;
  }
  return fmt::format("{:.2f}E{:+03.0f}", mant, exponent);
}

// ".453" style: leading zero dropped.
std::string format_mean(double v) {
  std::string s = fmt::format("{:.3f}", v);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
  return s;
}

std::string format_row(const std::string& label, const std::string& value) { return fmt::format("  {:<36}{:>14}\n", label, value); }

std::string write_csv(const auto& records, auto writer) {
  std::ostringstream out;
  writer(out, std::span(records));
  return out.str();
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, double> summary_values(const AnalysisReport& report) {
  std::map<std::string, double> v;
  const auto& t1 = report.confluence.summary;
  v["table1.n"] = static_cast<double>(t1.n_effective);
  v["table1.mean_m"] = t1.mean_m;
  v["table1.pct_below_half"] = t1.pct_below_half;
  v["table1.chi2_p"] = t1.chi2.p_value;
  for (const auto* run : {&report.dispersion_precursor, &report.dispersion_target}) {
    const std::string t = run->summary.side == ActivationSide::precursor ? "table2" : "table3";
    v[t + ".n"] = static_cast<double>(run->summary.n);
    v[t + ".mean_d"] = run->summary.mean_d;
    v[t + ".pct_positive"] = run->summary.pct_positive;
    v[t + ".chi2_p"] = run->summary.chi2.p_value;
  }
  const auto& t4 = report.distancing.table4;
  v["table4.n_d"] = static_cast<double>(t4.n_d);
  v["table4.n_targets"] = static_cast<double>(t4.n_targets);
  v["table4.mean_d"] = t4.mean_d;
  v["table4.pct_negative"] = t4.pct_negative;
  v["table4.chi2_p"] = t4.chi2.p_value;
  v["table4.pct_kw_significant"] = t4.pct_kw_significant;
  v["table4.chi2_p_kw"] = t4.chi2_kw.p_value;
  const auto& t5 = report.distancing.table5;
  v["table5.n_d"] = static_cast<double>(t5.n_d);
  v["table5.mean_n"] = t5.mean_n;
  v["table5.mean_d_prime"] = t5.mean_d_prime;
  v["table5.pct_negative"] = t5.pct_negative;
  v["table5.chi2_p"] = t5.chi2.p_value;
  v["table5.pct_binomial_significant"] = t5.pct_binomial_significant;
  v["table5.chi2_p_binomial"] = t5.chi2_binomial.p_value;
  return v;
}

std::map<std::string, double> load_paper_compare(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key=value");
    auto trim = [](std::string s) {
      const auto f = s.find_first_not_of(" \t\r");
      if (f == std::string::npos) return std::string();
      return s.substr(f, s.find_last_not_of(" \t\r") - f + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      std::size_t used = 0;
      const double parsed = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out[key] = parsed;
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "not a number: '" + value + "'");
    }
  }
  return out;
}

std::vector<PaperDelta> compare_with_paper(const AnalysisReport& report, const std::map<std::string, double>& expected) {
  const auto values = summary_values(report);
  std::vector<PaperDelta> out;
  for (const auto& [key, value] : expected) {
    PaperDelta d{key, value, std::nullopt};
    if (auto it = values.find(key); it != values.end()) d.computed = it->second;
    out.push_back(d);
  }
  return out;
}

std::string summary_json(const AnalysisReport& report) {
  const auto& cfg = report.config;
  ordered_json j;
  j["provenance"] = report.provenance;
  j["content_hash"] = report.content_hash;

  ordered_json c;
  c["k"] = cfg.k;
  c["precursors"] = cfg.m;
  c["clusters"] = cfg.c;
  c["min_cluster"] = cfg.min_cluster;
  c["method"] = to_string(cfg.method);
  c["seed"] = cfg.seed;
  c["partitions"] = cfg.partitions_path ? ordered_json(cfg.partitions_path->string()) : ordered_json(nullptr);
  if (cfg.labeler) {
    c["labeler_endpoint"] = cfg.labeler->endpoint;
    c["labeler_model"] = cfg.labeler->model;
  }
  j["config"] = c;

  j["pairs"] = {{"count", report.pairs.pairs.size()},
                {"targets_without_precursors", report.pairs.targets_without_precursors}};

  const auto& t1 = report.confluence.summary;
  j["table1"] = {{"skipped", t1.skipped},
                 {"n_effective", t1.n_effective},
                 {"skipped_cardinality", t1.skipped_cardinality},
                 {"skipped_no_pairs", t1.skipped_no_pairs},
                 {"mean_m", t1.mean_m},
                 {"pct_below_half", t1.pct_below_half},
                 {"chi2", test_json(t1.chi2)}};
  for (const auto* run : {&report.dispersion_precursor, &report.dispersion_target}) {
    const auto& s = run->summary;
    j[s.side == ActivationSide::precursor ? "table2" : "table3"] = {{"skipped", s.skipped},
                                                                   {"side", to_string(s.side)},
                                                                   {"n", s.n},
                                                                   {"skipped_cardinality", s.skipped_cardinality},
                                                                   {"mean_d", s.mean_d},
                                                                   {"pct_positive", s.pct_positive},
                                                                   {"chi2", test_json(s.chi2)}};
  }
  const auto& t4 = report.distancing.table4;
  j["table4"] = {{"skipped", t4.skipped},
                 {"n_d", t4.n_d},
                 {"n_targets", t4.n_targets},
                 {"mean_d", t4.mean_d},
                 {"pct_negative", t4.pct_negative},
                 {"chi2", test_json(t4.chi2)},
                 {"pct_kw_significant", t4.pct_kw_significant},
                 {"chi2_kw", test_json(t4.chi2_kw)}};
  const auto& t5 = report.distancing.table5;
  j["table5"] = {{"skipped", t5.skipped},
                 {"n_d", t5.n_d},
                 {"mean_n", t5.mean_n},
                 {"mean_d_prime", t5.mean_d_prime},
                 {"pct_negative", t5.pct_negative},
                 {"chi2", test_json(t5.chi2)},
                 {"pct_binomial_significant", t5.pct_binomial_significant},
                 {"chi2_binomial", test_json(t5.chi2_binomial)}};
  j["clustering"] = {{"method", to_string(cfg.method)},
                     {"partitions", report.partitions.size()},
                     {"label_failures", report.label_failures}};
  if (!report.paper_compare.empty()) {
    ordered_json deltas = ordered_json::array();
    for (const auto& d : report.paper_compare) {
      deltas.push_back({{"key", d.key},
                        {"expected", d.expected},
                        {"computed", d.computed ? ordered_json(*d.computed) : ordered_json(nullptr)},
                        {"delta", d.computed ? ordered_json(*d.computed - d.expected) : ordered_json(nullptr)}});
    }
    j["paper_compare"] = deltas;
  }
  return j.dump(2, ' ', false, ordered_json::error_handler_t::replace) + "\n";
}

std::string render_table(const AnalysisReport& report, int table) {
  std::string out;
  switch (table) {
    case 1: {
      const auto& s = report.confluence.summary;
      out = "Table 1. Partial categorical confluence (mean cross-cosine m between taken-clusters)\n";
      if (s.skipped) return out + "  skipped: no effective crossings\n";
      out += format_row("N (effective crossings)", std::to_string(s.n_effective));
      out += format_row("Mean (Mean (m))", format_mean(s.mean_m));
      out += format_row("% of (Mean (m) < .5)", fmt::format("{:.3f}", s.pct_below_half));
      out += format_row("p (chi-square)", format_p(s.chi2));
      out += format_row("skipped (cardinality)", std::to_string(s.skipped_cardinality));
      out += format_row("skipped (no distinct pairs)", std::to_string(s.skipped_no_pairs));
      return out;
    }
    case 2:
    case 3: {
      const auto& s = table == 2 ? report.dispersion_precursor.summary : report.dispersion_target.summary;
      out = fmt::format("Table {}. Activational dispersion d ({} activations)\n", table, to_string(s.side));
      if (s.skipped) return out + "  skipped: no qualifying taken-clusters\n";
      out += format_row("N", std::to_string(s.n));
      out += format_row("Mean (Mean (d))", format_mean(s.mean_d));
      out += format_row("% of (Mean (d) > 0)", fmt::format("{:.3f}", s.pct_positive));
      out += format_row("p (chi-square)", format_p(s.chi2));
      return out;
    }
    case 4: {
      const auto& s = report.distancing.table4;
      out = "Table 4. Categorical distancing d (cross minus within-x mean cosine)\n";
      if (s.skipped) return out + "  skipped: no qualifying cluster pairs\n";
      out += format_row("N_d", std::to_string(s.n_d));
      out += format_row("target neurons", std::to_string(s.n_targets));
      out += format_row("Mean (Mean (d))", format_mean(s.mean_d));
      out += format_row("% of (Mean (d) < 0)", fmt::format("{:.3f}", s.pct_negative));
      out += format_row("p (chi-square)", format_p(s.chi2));
      out += format_row("% of (p_KW < .05)", fmt::format("{:.3f}", s.pct_kw_significant));
      out += format_row("p (chi-square, KW split)", format_p(s.chi2_kw));
      return out;
    }
    case 5: {
      const auto& s = report.distancing.table5;
      out = "Table 5. Common tokens n and d' = n - n_x/10\n";
      if (s.skipped) return out + "  skipped: no qualifying cluster pairs\n";
      out += format_row("N_d", std::to_string(s.n_d));
      out += format_row("Mean (Mean (n))", format_mean(s.mean_n));
      out += format_row("Mean (Mean (d'))", format_mean(s.mean_d_prime));
      out += format_row("% of (Mean (d') < 0)", fmt::format("{:.3f}", s.pct_negative));
      out += format_row("p (chi-square)", format_p(s.chi2));
      out += format_row("% of (p_binomial < .05)", fmt::format("{:.3f}", s.pct_binomial_significant));
      out += format_row("p (chi-square, binomial split)", format_p(s.chi2_binomial));
      return out;
    }
    default:
      throw DomainError("render_table: table must be 1..5");
  }
}

std::string render_config(const AnalysisReport& report) {
  const auto& cfg = report.config;
  std::string out;
  out += fmt::format("k = {}\n", cfg.k);
  out += fmt::format("precursors = {}\n", cfg.m);
  out += fmt::format("clusters = {}\n", cfg.c);
  out += fmt::format("min-cluster = {}\n", cfg.min_cluster);
  out += fmt::format("method = {}\n", to_string(cfg.method));
  out += fmt::format("seed = {}\n", cfg.seed);
  if (!cfg.profiles.empty()) out += fmt::format("profiles = {}\n", cfg.profiles.string());
  if (!cfg.weights.empty()) out += fmt::format("weights = {}\n", cfg.weights.string());
  if (!cfg.embeddings.empty()) out += fmt::format("embeddings = {}\n", cfg.embeddings.string());
  if (cfg.partitions_path) out += fmt::format("partitions = {}\n", cfg.partitions_path->string());
  if (cfg.labeler) {
    out += fmt::format("llm-endpoint = {}\n", cfg.labeler->endpoint);
    out += fmt::format("llm-model = {}\n", cfg.labeler->model);
  }
  out += fmt::format("# provenance: {}\n", report.provenance);
  return out;
}

std::string render_paper_compare(const std::vector<PaperDelta>& deltas) {
  std::string out = fmt::format("{:<34}{:>16}{:>24}{:>24}\n", "key", "expected", "computed", "delta");
  for (const auto& d : deltas) {
    if (d.computed) {
      out += fmt::format("{:<34}{:>16.6g}{:>24.6g}{:>24.6g}\n", d.key, d.expected, *d.computed, *d.computed - d.expected);
    } else {
      out += fmt::format("{:<34}{:>16.6g}{:>24}{:>24}\n", d.key, d.expected, "n/a", "n/a");
    }
  }
  if (std::any_of(deltas.begin(), deltas.end(), [](const PaperDelta& d) { return d.key.find("chi2_p") != std::string::npos; })) {
    out += "# chi2_p rows: expected p-values need not follow from a df=1 recomputation of the expected splits;\n"
           "# compare magnitudes only.\n";
  }
  return out;
}

std::vector<std::filesystem::path> export_report(const AnalysisReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(dir / name, content);
    written.push_back(dir / name);
  };
  emit("summary.json", summary_json(report));
  for (int t = 1; t <= 5; ++t) emit(fmt::format("table{}.txt", t), render_table(report, t));
  emit("config.txt", render_config(report));
  emit("confluence.csv", write_csv(report.confluence.records, [](std::ostream& o, auto r) { write_confluence_csv(o, r); }));
  emit("dispersion_precursor.csv",
       write_csv(report.dispersion_precursor.records, [](std::ostream& o, auto r) { write_dispersion_csv(o, r); }));
  emit("dispersion_target.csv",
       write_csv(report.dispersion_target.records, [](std::ostream& o, auto r) { write_dispersion_csv(o, r); }));
  emit("distancing.csv", write_csv(report.distancing.records, [](std::ostream& o, auto r) { write_distancing_csv(o, r); }));
  std::ostringstream parts;
  write_partitions(parts, report.partitions);
  emit("partitions.jsonl", parts.str());
  if (!report.paper_compare.empty()) emit("paper_compare.txt", render_paper_compare(report.paper_compare));
  return written;
}

}  // namespace catres
