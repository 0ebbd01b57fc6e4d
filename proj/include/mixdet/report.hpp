// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/plot.hpp"
#include "mixdet/trainer.hpp"

namespace mixdet {

// ---------------------------------------------------------------------------
// Run comparison: load metrics/eval CSVs (plus the run.json the train command
// drops next to them), group runs of the same configuration across seeds, and
// emit a markdown table, a machine-readable JSON report, and curve plots.
// ---------------------------------------------------------------------------

/// @brief A parsed all-numeric CSV, column-major.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  ///< one per header entry

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return columns[i];
    throw std::out_of_range("csv: no column named " + name);
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("report: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("report: " + path + " is empty");
  CsvTable table;
  table.header = detail::split_csv_line(line);
  table.columns.resize(table.header.size());
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != table.header.size())
      throw std::runtime_error("report: " + path + " row " + std::to_string(row) +
                               " has " + std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(table.header.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[i].size())
        throw std::runtime_error("report: " + path + " row " + std::to_string(row) +
                                 ": cannot parse \"" + fields[i] + "\" as a number");
      table.columns[i].push_back(v);
    }
  }
  return table;
}

/// @brief One training run's logs plus identifying metadata.
struct RunRecord {
  std::string path;   ///< run directory (or the metrics CSV's directory)
  std::string label;  ///< group key: runs with equal labels average together
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;  ///< from eval header / run.json, may be empty
  CsvTable metrics;
  std::vector<double> eval_t;
  std::vector<double> eval_map;
  double final_map = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> final_per_class_ap;

  bool has_final_map() const { return !std::isnan(final_map); }
};

/// @brief Group key for a configuration: mode, plus the type/alpha ablation
/// axes whenever they deviate from the benchmark defaults.
inline std::string compose_run_label(TrainMode mode, IsdTypes types, double alpha) {
  std::string label = to_string(mode);
  const bool isd = mode == TrainMode::kIsd || mode == TrainMode::kCsdIsd;
  if (isd && types != IsdTypes::kBoth) label += std::string("(") + to_string(types) + ")";
  if (isd && alpha != 100.0) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " alpha=%g", alpha);
    label += buf;
  }
  return label;
}

/// @brief Load one run from a run directory or a bare metrics.csv path.
///
/// The metrics header must match the trainer's schema exactly; eval.csv (when
/// present) must be t, ap_* columns, map. run.json supplies label/seed/final
/// AP when present; otherwise the label falls back to the directory name and
/// the final mAP to the last eval row.
inline RunRecord load_run(const std::string& path) {
  namespace fs = std::filesystem;
  RunRecord run;
  std::string metrics_path;
  if (fs::is_directory(path)) {
    run.path = path;
    metrics_path = (fs::path(path) / "metrics.csv").string();
    if (!fs::exists(metrics_path))
      throw std::runtime_error("report: no metrics.csv in " + path);
  } else {
    metrics_path = path;
    run.path = fs::path(path).parent_path().string();
    if (run.path.empty()) run.path = ".";
  }

  run.metrics = read_csv_table(metrics_path);
  {
    std::string joined;
    for (std::size_t i = 0; i < run.metrics.header.size(); ++i)
      joined += (i ? "," : "") + run.metrics.header[i];
    if (joined != metrics_csv_header())
      throw std::runtime_error("report: metrics CSV schema mismatch: " + metrics_path);
  }

  const std::string eval_path = (std::filesystem::path(run.path) / "eval.csv").string();
  if (fs::exists(eval_path)) {
    const CsvTable ev = read_csv_table(eval_path);
    const bool shape_ok = ev.header.size() >= 2 && ev.header.front() == "t" &&
                          ev.header.back() == "map";
    bool ap_ok = shape_ok;
    for (std::size_t i = 1; ap_ok && i + 1 < ev.header.size(); ++i)
      ap_ok = ev.header[i].rfind("ap_", 0) == 0;
    if (!ap_ok)
      throw std::runtime_error("report: eval CSV schema mismatch: " + eval_path);
    for (std::size_t i = 1; i + 1 < ev.header.size(); ++i)
      run.class_names.push_back(ev.header[i].substr(3));
    run.eval_t = ev.column("t");
    run.eval_map = ev.column("map");
    if (!run.eval_map.empty()) {
      run.final_map = run.eval_map.back();
      for (std::size_t i = 1; i + 1 < ev.header.size(); ++i)
        run.final_per_class_ap.push_back(ev.columns[i].back());
    }
  }

  run.label = fs::path(run.path).filename().string();
  if (run.label.empty()) run.label = metrics_path;
  const std::string meta_path = (std::filesystem::path(run.path) / "run.json").string();
  if (fs::exists(meta_path)) {
    std::ifstream f(meta_path);
    nlohmann::json j;
    f >> j;
    if (j.contains("label")) run.label = j.at("label").get<std::string>();
    if (j.contains("seed")) run.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("class_names"))
      run.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("final_map") && !j.at("final_map").is_null())
      run.final_map = j.at("final_map").get<double>();
    if (j.contains("per_class_ap"))
      run.final_per_class_ap = j.at("per_class_ap").get<std::vector<double>>();
  }
  return run;
}

/// @brief Aggregate of all runs sharing a label.
struct GroupStats {
  std::string label;
  std::size_t n_runs = 0;                ///< runs in the group
  std::size_t n_scored = 0;              ///< runs contributing a final mAP
  double mean_map = std::numeric_limits<double>::quiet_NaN();
  double std_map = std::numeric_limits<double>::quiet_NaN();  ///< sample std, 0 for n==1
  double delta_vs_baseline = std::numeric_limits<double>::quiet_NaN();
};

/// @brief Group runs by label (first-appearance order, baseline hoisted to the
/// front) and attach mean/std of final mAP plus the delta against the
/// baseline group's mean.
inline std::vector<GroupStats> group_runs(const std::vector<RunRecord>& runs,
                                          const std::string& baseline_label = "supervised") {
  std::vector<GroupStats> groups;
  std::map<std::string, std::size_t> index;
  for (const RunRecord& run : runs) {
    auto [it, inserted] = index.emplace(run.label, groups.size());
    if (inserted) groups.push_back(GroupStats{run.label});
    GroupStats& g = groups[it->second];
    ++g.n_runs;
    if (!run.has_final_map()) continue;
    ++g.n_scored;
    // Streaming mean/M2 (Welford) keeps this one pass.
    const double delta = run.final_map - (g.n_scored == 1 ? 0.0 : g.mean_map);
    if (g.n_scored == 1) {
      g.mean_map = run.final_map;
      g.std_map = 0.0;
    } else {
      g.mean_map += delta / static_cast<double>(g.n_scored);
      g.std_map += delta * (run.final_map - g.mean_map);  // accumulates M2
    }
  }
  for (GroupStats& g : groups) {
    if (g.n_scored >= 2)
      g.std_map = std::sqrt(g.std_map / static_cast<double>(g.n_scored - 1));
  }
  double baseline_mean = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].label != baseline_label) continue;
    baseline_mean = groups[i].mean_map;
    std::rotate(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(i),
                groups.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    break;
  }
  if (!std::isnan(baseline_mean))
    for (GroupStats& g : groups)
      if (!std::isnan(g.mean_map)) g.delta_vs_baseline = g.mean_map - baseline_mean;
  return groups;
}

namespace detail {

inline std::string format_points(double v01, int decimals = 2) {
  if (std::isnan(v01)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v01 * 100.0);
  return buf;
}

}  // namespace detail

/// @brief Comparison table (mAP in percentage points; deltas against the
/// baseline group's mean).
inline std::string report_markdown(const std::vector<GroupStats>& groups,
                                   const std::string& baseline_label = "supervised") {
  std::ostringstream md;
  md << "# Run comparison\n\n";
  md << "Final mAP in percentage points; mean +/- sample std over seeds; delta vs the `"
     << baseline_label << "` group mean.\n\n";
  md << "| run | seeds | final mAP | delta |\n";
  md << "|---|---:|---|---:|\n";
  for (const GroupStats& g : groups) {
    md << "| " << g.label << " | " << g.n_scored << " | ";
    if (std::isnan(g.mean_map)) {
      md << "-";
    } else {
      md << detail::format_points(g.mean_map);
      if (g.n_scored > 1) md << " +/- " << detail::format_points(g.std_map);
    }
    md << " | ";
    if (std::isnan(g.delta_vs_baseline)) {
      md << "-";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+.2f", g.delta_vs_baseline * 100.0);
      md << buf;
    }
    md << " |\n";
  }
  return md.str();
}

/// @brief Machine-readable mirror of the table (raw [0,1] values, NaN → null).
inline nlohmann::json report_json(const std::vector<RunRecord>& runs,
                                  const std::vector<GroupStats>& groups,
                                  const std::string& baseline_label = "supervised") {
  auto or_null = [](double v) {
    return std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
  };
  nlohmann::json j;
  j["baseline"] = baseline_label;
  j["groups"] = nlohmann::json::array();
  for (const GroupStats& g : groups) {
    nlohmann::json jg;
    jg["label"] = g.label;
    jg["n_runs"] = g.n_runs;
    jg["n_scored"] = g.n_scored;
    jg["final_map_mean"] = or_null(g.mean_map);
    jg["final_map_std"] = or_null(g.std_map);
    jg["delta_vs_baseline"] = or_null(g.delta_vs_baseline);
    jg["runs"] = nlohmann::json::array();
    for (const RunRecord& run : runs) {
      if (run.label != g.label) continue;
      jg["runs"].push_back({{"path", run.path},
                            {"seed", run.seed},
                            {"final_map", or_null(run.final_map)}});
    }
    j["groups"].push_back(std::move(jg));
  }
  return j;
}

/// @brief Write report.md, report.json, loss_total.png, and (when any run has
/// eval rows) map.png into `out_dir`. Returns the group table.
inline std::vector<GroupStats> write_report(const std::vector<RunRecord>& runs,
                                            const std::string& out_dir,
                                            const std::string& baseline_label = "supervised") {
  if (runs.empty()) throw std::invalid_argument("report: no runs");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::vector<GroupStats> groups = group_runs(runs, baseline_label);

  {
    std::ofstream f(fs::path(out_dir) / "report.md", std::ios::trunc);
    if (!f) throw std::runtime_error("report: cannot write report.md in " + out_dir);
    f << report_markdown(groups, baseline_label);
  }
  {
    std::ofstream f(fs::path(out_dir) / "report.json", std::ios::trunc);
    if (!f) throw std::runtime_error("report: cannot write report.json in " + out_dir);
    f << report_json(runs, groups, baseline_label).dump(2) << "\n";
  }

  auto series_label = [](const RunRecord& run) {
    return run.label + " s" + std::to_string(run.seed);
  };
  PlotSpec loss;
  loss.title = "total loss";
  loss.x_label = "step";
  loss.y_label = "loss";
  for (const RunRecord& run : runs)
    loss.series.push_back(
        {series_label(run), run.metrics.column("t"), run.metrics.column("l_total")});
  write_line_plot((fs::path(out_dir) / "loss_total.png").string(), loss);

  PlotSpec map_plot;
  map_plot.title = "held-out mAP";
  map_plot.x_label = "step";
  map_plot.y_label = "mAP";
  for (const RunRecord& run : runs)
    if (!run.eval_t.empty())
      map_plot.series.push_back({series_label(run), run.eval_t, run.eval_map});
  if (!map_plot.series.empty())
    write_line_plot((fs::path(out_dir) / "map.png").string(), map_plot);

  return groups;
}

}  // namespace mixdet
