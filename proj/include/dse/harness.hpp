#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/filters.hpp"
#include "dse/power_model.hpp"
#include "dse/robust_stats.hpp"
#include "dse/simulator.hpp"

namespace dse {

struct RunConfig {
  std::filesystem::path case_path;
  std::filesystem::path scenario_path;
  std::vector<FilterKind> filters;
  HuberConfig huber;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;  ///< overrides the scenario seed
  bool emit_plots = false;
  bool mask_invalid = false;

  /// At least one filter, no duplicates, input paths exist.
  void validate() const;
};

/// A failure tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& detail, int exit_code)
      : Error(stage + ": " + detail), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  /// 1 for numerical failures, 2 for configuration or I/O failures.
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

/// Everything the filters share within one run: the model they are given,
/// the true trajectory and the one measurement stream they all consume.
struct Experiment {
  CaseData case_data;
  Scenario scenario;
  SystemParams sys;
  std::shared_ptr<const PowerSystemModel> model;
  Trajectory truth;
  std::vector<MeasurementFrame> stream;  ///< noisy, faults applied
  NoiseModel noise;
  FilterState initial;
};

/// Simulates truth and synthesizes the faulted stream. Filters start at the
/// pre-disturbance equilibrium with Sigma_0 = initial_covariance * I.
Experiment prepare_experiment(CaseData case_data, Scenario scenario);
Experiment prepare_experiment(const RunConfig& config);

struct FilterRun {
  FilterKind kind = FilterKind::Ekf;
  std::vector<Vector> estimates;  ///< one per frame; entry 0 is the initial estimate
  std::vector<int> irls_iterations;  ///< per step (GM-EKF), empty otherwise
  std::vector<std::vector<ObjectiveStep>> objective;  ///< per step (GM-EKF)
  double overall_error = 0.0;  ///< over steps 1..N
  double seconds = 0.0;        ///< wall-clock spent inside the filter steps
  int irls_not_converged = 0;
  int covariance_not_pd = 0;   ///< steps whose corrected covariance was not SPD
  double min_covariance_eigenvalue = 0.0;
  std::vector<std::string> warnings;
};

struct RunOptions {
  /// Record the IRLS objective trace and covariance eigenvalues. The extra
  /// work is excluded from `seconds`.
  bool diagnostics = true;
};

FilterRun run_filter(const Experiment& experiment, FilterKind kind, const FilterSettings& settings,
                     const RunOptions& options = {});

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  int steps = 0;
  double dt = 0.0;
  std::vector<FilterRun> runs;  ///< one per selected filter, in selection order
};

/// Runs every selected filter on the same stream and writes trace.csv,
/// report.json and (optionally) SVG plots into config.output_dir.
/// Failures are rethrown as StageError.
RunReport run(const RunConfig& config);

// ---------------------------------------------------------------------------
// Artifacts

/// Per-state trace: time, then for each state its truth column followed by
/// one column per filter (truth_omega_1, ekf_omega_1, ...). Full-precision
/// decimals, LF line endings.
void write_trace_csv(std::ostream& out, const Experiment& experiment,
                     const std::vector<FilterRun>& runs);

struct TraceTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column position of `name`; throws ConfigError when absent.
  int column(const std::string& name) const;
};

TraceTable read_trace_csv(std::istream& in);

void write_report_json(std::ostream& out, const RunReport& report);

struct PlotSeries {
  std::string label;
  std::vector<double> values;
};

/// Line plot of several series over a shared time axis.
void write_svg_plot(std::ostream& out, const std::string& title, const std::string& y_label,
                    const std::vector<double>& times, const std::vector<PlotSeries>& series);

// ---------------------------------------------------------------------------
// Timing

struct BenchConfig {
  std::filesystem::path case_path;
  std::vector<std::filesystem::path> scenario_paths;
  std::vector<FilterKind> filters;
  HuberConfig huber;
  int repeats = 1;
  int jobs = 1;  ///< parallel workers; more than one can inflate the spread
  std::optional<std::uint64_t> seed;
};

struct BenchRow {
  std::string scenario;
  FilterKind kind = FilterKind::Ekf;
  int repeats = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;  ///< sample standard deviation, 0 for one repeat
};

/// Mean and spread of the filter wall-clock time per full scenario run.
/// Truth and stream are generated once per scenario and shared by all repeats.
std::vector<BenchRow> bench(const BenchConfig& config);

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace dse
