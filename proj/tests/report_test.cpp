// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include "mixdet/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mixdet {
namespace {

namespace fs = std::filesystem;

class ReportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "mixdet_report_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    f << text;
  }

  /// Fabricate a run directory the way the train command lays one out.
  fs::path make_run(const std::string& name, const std::string& label, std::uint64_t seed,
                    double final_map) {
    const fs::path run = dir_ / name;
    std::string metrics = metrics_csv_header() + "\n";
    for (int t = 1; t <= 3; ++t)
      metrics += std::to_string(t) + ",1,0.5,2.5,0,0,0,0,0,0," +
                 std::to_string(3.0 - 0.5 * t) + ",0,0,0,4\n";
    write_file(run / "metrics.csv", metrics);
    write_file(run / "eval.csv", "t,ap_circle,ap_square,ap_triangle,map\n"
                                 "2,0.4,0.4,0.4,0.4\n"
                                 "3,0.5,0.5,0.5," + std::to_string(final_map) + "\n");
    nlohmann::json meta{{"label", label}, {"seed", seed}, {"final_map", final_map},
                        {"class_names", {"circle", "square", "triangle"}}};
    write_file(run / "run.json", meta.dump());
    return run;
  }

  fs::path dir_;
};

TEST_F(ReportTest, ReadCsvTableParsesColumnsAndRejectsBadRows) {
  write_file(dir_ / "ok.csv", "a,b\n1,2\n3,4.5\n");
  const CsvTable t = read_csv_table((dir_ / "ok.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.column("b"), (std::vector<double>{2.0, 4.5}));
  EXPECT_THROW(t.column("c"), std::out_of_range);

  write_file(dir_ / "ragged.csv", "a,b\n1\n");
  EXPECT_THROW(read_csv_table((dir_ / "ragged.csv").string()), std::runtime_error);
  write_file(dir_ / "text.csv", "a,b\n1,two\n");
  EXPECT_THROW(read_csv_table((dir_ / "text.csv").string()), std::runtime_error);
  EXPECT_THROW(read_csv_table((dir_ / "absent.csv").string()), std::runtime_error);
}

TEST_F(ReportTest, LoadRunReadsMetadataCurvesAndFinalMap) {
  const fs::path run = make_run("r1", "csd+isd", 11, 0.625);
  const RunRecord rec = load_run(run.string());
  EXPECT_EQ(rec.label, "csd+isd");
  EXPECT_EQ(rec.seed, 11u);
  EXPECT_DOUBLE_EQ(rec.final_map, 0.625);
  EXPECT_EQ(rec.metrics.rows(), 3u);
  EXPECT_EQ(rec.eval_t, (std::vector<double>{2.0, 3.0}));
  EXPECT_EQ(rec.class_names,
            (std::vector<std::string>{"circle", "square", "triangle"}));
  ASSERT_EQ(rec.final_per_class_ap.size(), 3u);
  EXPECT_DOUBLE_EQ(rec.final_per_class_ap[0], 0.5);

  // A bare metrics.csv path resolves to the same run directory.
  const RunRecord by_csv = load_run((run / "metrics.csv").string());
  EXPECT_EQ(by_csv.label, rec.label);
  EXPECT_DOUBLE_EQ(by_csv.final_map, rec.final_map);
}

TEST_F(ReportTest, LoadRunWithoutMetadataFallsBackToDirectoryName) {
  const fs::path run = make_run("sup_a", "x", 0, 0.5);
  fs::remove(run / "run.json");
  fs::remove(run / "eval.csv");
  const RunRecord rec = load_run(run.string());
  EXPECT_EQ(rec.label, "sup_a");
  EXPECT_FALSE(rec.has_final_map());
}

TEST_F(ReportTest, SchemaMismatchesAreRejected) {
  const fs::path run = make_run("bad", "csd", 1, 0.5);
  write_file(run / "metrics.csv", "t,loss\n1,2\n");
  try {
    load_run(run.string());
    FAIL() << "expected schema error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("schema mismatch"), std::string::npos);
  }

  const fs::path run2 = make_run("bad2", "csd", 1, 0.5);
  write_file(run2 / "eval.csv", "t,circle_ap,map\n1,0.5,0.5\n");
  EXPECT_THROW(load_run(run2.string()), std::runtime_error);

  EXPECT_THROW(load_run((dir_ / "no_such_run").string()), std::runtime_error);
}

TEST_F(ReportTest, GroupRunsComputesMeanSampleStdAndBaselineDelta) {
  auto rec = [](const std::string& label, double map) {
    RunRecord r;
    r.label = label;
    r.final_map = map;
    return r;
  };
  const std::vector<RunRecord> runs = {rec("csd+isd", 0.50), rec("csd+isd", 0.60),
                                       rec("supervised", 0.40), rec("supervised", 0.44),
                                       rec("supervised", 0.48)};
  const std::vector<GroupStats> groups = group_runs(runs);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].label, "supervised") << "baseline group is hoisted to the front";
  EXPECT_NEAR(groups[0].mean_map, 0.44, 1e-12);
  EXPECT_NEAR(groups[0].std_map, 0.04, 1e-12);
  EXPECT_NEAR(groups[0].delta_vs_baseline, 0.0, 1e-12);
  EXPECT_EQ(groups[1].label, "csd+isd");
  EXPECT_EQ(groups[1].n_scored, 2u);
  EXPECT_NEAR(groups[1].mean_map, 0.55, 1e-12);
  EXPECT_NEAR(groups[1].std_map, std::sqrt(2 * 0.05 * 0.05), 1e-12);
  EXPECT_NEAR(groups[1].delta_vs_baseline, 0.11, 1e-12);
}

TEST_F(ReportTest, SingleSupervisedRunHasDeltaZero) {
  RunRecord r;
  r.label = "supervised";
  r.final_map = 0.4321;
  const std::vector<GroupStats> groups = group_runs({r});
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].n_scored, 1u);
  EXPECT_DOUBLE_EQ(groups[0].std_map, 0.0);
  EXPECT_DOUBLE_EQ(groups[0].delta_vs_baseline, 0.0);
  const std::string md = report_markdown(groups);
  EXPECT_NE(md.find("| supervised | 1 | 43.21 | +0.00 |"), std::string::npos) << md;
}

TEST_F(ReportTest, MissingBaselineLeavesDeltasBlank) {
  RunRecord r;
  r.label = "csd";
  r.final_map = 0.5;
  const std::vector<GroupStats> groups = group_runs({r});
  EXPECT_TRUE(std::isnan(groups[0].delta_vs_baseline));
  EXPECT_NE(report_markdown(groups).find("| csd | 1 | 50.00 | - |"), std::string::npos);
}

TEST_F(ReportTest, ComposeRunLabelEncodesTheAblationAxes) {
  EXPECT_EQ(compose_run_label(TrainMode::kSupervised, IsdTypes::kBoth, 100.0), "supervised");
  EXPECT_EQ(compose_run_label(TrainMode::kCsd, IsdTypes::kBoth, 100.0), "csd");
  EXPECT_EQ(compose_run_label(TrainMode::kIsd, IsdTypes::kBoth, 100.0), "isd");
  EXPECT_EQ(compose_run_label(TrainMode::kIsd, IsdTypes::kType2, 100.0), "isd(type2)");
  EXPECT_EQ(compose_run_label(TrainMode::kCsdIsd, IsdTypes::kBoth, 1.0), "csd+isd alpha=1");
  // The type/alpha axes only apply to modes that mix.
  EXPECT_EQ(compose_run_label(TrainMode::kCsd, IsdTypes::kType1, 1.0), "csd");
}

TEST_F(ReportTest, WriteReportEmitsTableJsonAndPlots) {
  std::vector<RunRecord> runs;
  runs.push_back(load_run(make_run("s1", "supervised", 1, 0.40).string()));
  runs.push_back(load_run(make_run("s2", "supervised", 2, 0.44).string()));
  runs.push_back(load_run(make_run("m1", "csd+isd", 1, 0.52).string()));
  const fs::path out = dir_ / "report";
  const std::vector<GroupStats> groups = write_report(runs, out.string());
  ASSERT_EQ(groups.size(), 2u);

  ASSERT_TRUE(fs::exists(out / "report.md"));
  ASSERT_TRUE(fs::exists(out / "report.json"));
  ASSERT_TRUE(fs::exists(out / "loss_total.png"));
  ASSERT_TRUE(fs::exists(out / "map.png"));

  std::ifstream jf(out / "report.json");
  nlohmann::json j;
  jf >> j;
  EXPECT_EQ(j.at("baseline"), "supervised");
  ASSERT_EQ(j.at("groups").size(), 2u);
  EXPECT_EQ(j.at("groups")[0].at("label"), "supervised");
  EXPECT_NEAR(j.at("groups")[0].at("final_map_mean").get<double>(), 0.42, 1e-12);
  EXPECT_NEAR(j.at("groups")[1].at("delta_vs_baseline").get<double>(), 0.10, 1e-12);
  EXPECT_EQ(j.at("groups")[1].at("runs").size(), 1u);

  // Plots decode as PNGs of the configured default size.
  const ImageU8 img = read_png((out / "map.png").string());
  EXPECT_EQ(img.width, 720);
  EXPECT_EQ(img.height, 440);

  EXPECT_THROW(write_report({}, (dir_ / "empty_report").string()), std::invalid_argument);
}

}  // namespace
}  // namespace mixdet
