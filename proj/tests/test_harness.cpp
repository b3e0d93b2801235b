#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dse/harness.hpp"
#include "support.hpp"

namespace dse {
namespace {

namespace fs = std::filesystem;
using testing::data_path;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dse_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig config_for(const std::string& scenario, std::vector<FilterKind> filters, const std::string& out) {
  RunConfig cfg;
  cfg.case_path = data_path("data/ieee39.case");
  cfg.scenario_path = data_path("scenarios/" + scenario);
  cfg.filters = std::move(filters);
  cfg.output_dir = scratch_dir(out);
  return cfg;
}

// A short run shared by the artifact tests.
const Experiment& short_experiment() {
  static const Experiment e = [] {
    Scenario s = load_scenario(data_path("scenarios/case1_clean.scn"), testing::ieee39());
    s.duration = 1.0;
    return prepare_experiment(testing::ieee39(), s);
  }();
  return e;
}

TEST(RunConfig, Validation) {
  RunConfig cfg = config_for("case1_clean.scn", {FilterKind::Ekf}, "validate");
  EXPECT_NO_THROW(cfg.validate());
  cfg.filters.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.filters = {FilterKind::Ekf, FilterKind::Ekf};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Run, InvalidCasePathIsAConfigurationFailure) {
  RunConfig cfg = config_for("case1_clean.scn", {FilterKind::Ekf}, "badcase");
  cfg.case_path = "/nonexistent/ieee39.case";
  try {
    run(cfg);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.exit_code(), 2);
    EXPECT_NE(std::string(e.what()).find("case file not found"), std::string::npos);
  }
}

TEST(Run, InvalidScenarioIsAConfigurationFailure) {
  RunConfig cfg = config_for("case1_clean.scn", {FilterKind::Ekf}, "badscn");
  const fs::path bad = cfg.output_dir.parent_path() / "dse_test_bad.scn";
  std::ofstream(bad) << "dse-scenario 1\nduration -1\n";
  cfg.scenario_path = bad;
  try {
    run(cfg);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
  fs::remove(bad);
}

TEST(Run, AllFiltersShareOneStreamAndReportSameOrderErrors) {
  const RunConfig cfg = config_for("case1_clean.scn", {FilterKind::Ekf, FilterKind::GmEkf, FilterKind::Ukf}, "all");
  const RunReport report = run(cfg);
  ASSERT_EQ(report.runs.size(), 3u);
  EXPECT_EQ(report.steps, 600);
  for (const auto& r : report.runs) {
    EXPECT_EQ(r.estimates.size(), 601u);
    EXPECT_GT(r.overall_error, 1e-3);
    EXPECT_LT(r.overall_error, 1e-1);
  }
  EXPECT_EQ(report.runs[1].irls_iterations.size(), 600u);
  EXPECT_TRUE(report.runs[0].irls_iterations.empty());

  std::ifstream json_in(cfg.output_dir / "report.json");
  const auto json = nlohmann::json::parse(json_in);
  EXPECT_EQ(json["scenario"], "case1_clean");
  ASSERT_EQ(json["filters"].size(), 3u);
  EXPECT_EQ(json["filters"][1]["filter"], "gmekf");
  EXPECT_DOUBLE_EQ(json["filters"][2]["overall_error"].get<double>(), report.runs[2].overall_error);
}

TEST(Run, GmEkfOnlyCommLossTraceAndPlots) {
  RunConfig cfg = config_for("case2_comm_loss.scn", {FilterKind::GmEkf}, "commloss");
  cfg.emit_plots = true;
  run(cfg);
  std::ifstream in(cfg.output_dir / "trace.csv");
  const TraceTable t = read_trace_csv(in);
  ASSERT_GE(t.header.size(), 3u);
  EXPECT_EQ(t.header[0], "time");
  EXPECT_EQ(t.header[1], "truth_omega_1");
  EXPECT_EQ(t.header[2], "gmekf_omega_1");
  EXPECT_EQ(t.header.size(), 41u);
  EXPECT_EQ(t.rows.size(), 601u);
  EXPECT_GE(t.column("gmekf_omega_5"), 0);
  for (const char* name : {"omega_5.svg", "delta_5.svg"}) {
    const fs::path svg = cfg.output_dir / name;
    ASSERT_TRUE(fs::exists(svg)) << name;
    std::ifstream s(svg);
    const std::string text((std::istreambuf_iterator<char>(s)), std::istreambuf_iterator<char>());
    EXPECT_EQ(text.rfind("<svg", 0), 0u);
    EXPECT_NE(text.find("</svg>"), std::string::npos);
    EXPECT_NE(text.find("gmekf"), std::string::npos);
  }
}

TEST(TraceCsv, RoundTripIsExact) {
  const Experiment& e = short_experiment();
  std::vector<FilterRun> runs = {run_filter(e, FilterKind::Ekf, {}), run_filter(e, FilterKind::Ukf, {})};
  // Awkward values that expose any loss of precision.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : runs[1].estimates) {
    for (auto& v : x) v = std::ldexp(u(rng), static_cast<int>(rng() % 40) - 20);
  }
  std::stringstream buf;
  write_trace_csv(buf, e, runs);
  EXPECT_EQ(buf.str().find('\r'), std::string::npos);
  const TraceTable t = read_trace_csv(buf);
  ASSERT_EQ(t.rows.size(), e.truth.states.size());
  const int n = e.sys.n_gen;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    ASSERT_EQ(t.rows[k][0], e.truth.times[k]);
    for (int i = 0; i < 2 * n; ++i) {
      const std::size_t base = 1 + 3 * static_cast<std::size_t>(i);
      ASSERT_EQ(t.rows[k][base], e.truth.states[k].stacked()[i]);
      ASSERT_EQ(t.rows[k][base + 1], runs[0].estimates[k][i]);
      ASSERT_EQ(t.rows[k][base + 2], runs[1].estimates[k][i]);
    }
  }
}

TEST(TraceCsv, MalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_trace_csv(empty), ConfigError);
  std::istringstream ragged("time,a\n0,1\n1\n");
  EXPECT_THROW(read_trace_csv(ragged), ConfigError);
  std::istringstream junk("time,a\n0,x\n");
  EXPECT_THROW(read_trace_csv(junk), ConfigError);
  std::istringstream ok("time,a\n0,1\n");
  EXPECT_THROW(read_trace_csv(ok).column("b"), ConfigError);
}

TEST(SvgPlot, RejectsBadSeries) {
  std::ostringstream out;
  EXPECT_THROW(write_svg_plot(out, "t", "y", {0.0}, {}), ConfigError);
  EXPECT_THROW(write_svg_plot(out, "t", "y", {0.0, 1.0}, {{"a", {1.0}}}), ConfigError);
  EXPECT_NO_THROW(write_svg_plot(out, "t", "y", {0.0, 1.0}, {{"flat", {2.0, 2.0}}}));
}

TEST(RunFilter, DiagnosticsDoNotChangeEstimates) {
  const Experiment& e = short_experiment();
  const FilterRun a = run_filter(e, FilterKind::GmEkf, {}, RunOptions{true});
  const FilterRun b = run_filter(e, FilterKind::GmEkf, {}, RunOptions{false});
  ASSERT_EQ(a.estimates.size(), b.estimates.size());
  for (std::size_t k = 0; k < a.estimates.size(); ++k) ASSERT_EQ(a.estimates[k], b.estimates[k]);
  EXPECT_FALSE(a.objective.empty());
  EXPECT_GT(a.min_covariance_eigenvalue, 0.0);
}

TEST(Bench, SingleRepeatHasZeroSpread) {
  BenchConfig cfg;
  cfg.case_path = data_path("data/ieee39.case");
  cfg.scenario_paths = {data_path("scenarios/case1_clean.scn")};
  cfg.filters = {FilterKind::Ekf, FilterKind::GmEkf};
  cfg.repeats = 1;
  const auto rows = bench(cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.repeats, 1);
    EXPECT_EQ(r.std_seconds, 0.0);
    EXPECT_GT(r.mean_seconds, 0.0);
  }
  std::ostringstream table;
  write_bench_table(table, rows);
  EXPECT_EQ(table.str().rfind("scenario,filter,repeats,mean_seconds,std_seconds\n", 0), 0u);
}

TEST(Bench, RejectsInvalidConfig) {
  BenchConfig cfg;
  cfg.case_path = data_path("data/ieee39.case");
  cfg.scenario_paths = {data_path("scenarios/case1_clean.scn")};
  cfg.filters = {FilterKind::Ekf};
  cfg.repeats = 0;
  try {
    bench(cfg);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
}

}  // namespace
}  // namespace dse
