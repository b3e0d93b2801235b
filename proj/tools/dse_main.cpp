#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dse/harness.hpp"
#include "dse/text_format.hpp"

namespace {

// DSE_LOG=trace|debug|info|warn|error|off, default info.
void configure_logging() {
  const char* level = std::getenv("DSE_LOG");
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

std::vector<dse::FilterKind> parse_filters(const std::string& list) {
  std::vector<dse::FilterKind> kinds;
  for (const auto& name : dse::text::split(list, ',')) kinds.push_back(dse::parse_filter_kind(name));
  return kinds;
}

void log_report(const dse::RunReport& report) {
  spdlog::info("scenario {} (seed {}, {} steps)", report.scenario, report.seed, report.steps);
  for (const auto& r : report.runs) {
    spdlog::info("  {:6} overall error {:.6g}  time {:.4f} s", dse::to_string(r.kind), r.overall_error,
                 r.seconds);
    for (const auto& w : r.warnings) spdlog::warn("  {}: {}", dse::to_string(r.kind), w);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Power-system dynamic state estimation: EKF, GM-EKF and UKF on PMU streams"};
  app.require_subcommand(1);

  std::string filters = "ekf,gmekf,ukf";
  dse::HuberConfig huber;

  dse::RunConfig run_cfg;
  std::uint64_t run_seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run the selected filters on one scenario");
  run_cmd->add_option("--case", run_cfg.case_path, "Case file")->required();
  run_cmd->add_option("--scenario", run_cfg.scenario_path, "Scenario file")->required();
  run_cmd->add_option("--filters", filters, "Comma-separated subset of ekf,gmekf,ukf")
      ->capture_default_str();
  run_cmd->add_option("--out", run_cfg.output_dir, "Output directory")->required();
  auto* seed_opt = run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  run_cmd->add_flag("--plots", run_cfg.emit_plots, "Write SVG plots");
  run_cmd->add_flag("--mask-invalid", run_cfg.mask_invalid,
                    "Drop channels flagged invalid instead of using them as zeros");
  run_cmd->add_option("--huber-c", huber.c, "Huber breakpoint")->capture_default_str();
  run_cmd->add_option("--ps-threshold", huber.d, "Leverage weight threshold")->capture_default_str();
  run_cmd->add_option("--irls-tol", huber.irls_tol, "IRLS stopping tolerance")->capture_default_str();

  dse::BenchConfig bench_cfg;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "Time each filter over repeated runs");
  bench_cmd->add_option("--case", bench_cfg.case_path, "Case file")->required();
  bench_cmd->add_option("--scenario", bench_cfg.scenario_paths, "Scenario file (repeatable)")
      ->required();
  bench_cmd->add_option("--filters", filters, "Comma-separated subset of ekf,gmekf,ukf")
      ->capture_default_str();
  bench_cmd->add_option("--repeats", bench_cfg.repeats, "Runs per scenario and filter")
      ->capture_default_str();
  bench_cmd->add_option("--jobs", bench_cfg.jobs, "Parallel workers (default sequential)")
      ->capture_default_str();
  auto* bench_seed_opt = bench_cmd->add_option("--seed", bench_seed, "Override the scenario seed");
  bench_cmd->add_option("--out", bench_out, "Write the table to this CSV file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      run_cfg.filters = parse_filters(filters);
      run_cfg.huber = huber;
      if (*seed_opt) run_cfg.seed = run_seed;
      const dse::RunReport report = dse::run(run_cfg);
      log_report(report);
      spdlog::info("artifacts written to {}", run_cfg.output_dir.string());
    } else {
      bench_cfg.filters = parse_filters(filters);
      bench_cfg.huber = huber;
      if (*bench_seed_opt) bench_cfg.seed = bench_seed;
      const auto rows = dse::bench(bench_cfg);
      dse::write_bench_table(std::cout, rows);
      if (!bench_out.empty()) {
        std::ofstream out(bench_out, std::ios::binary);
        if (!out) throw dse::StageError("output", "cannot write " + bench_out, 2);
        dse::write_bench_table(out, rows);
      }
    }
  } catch (const dse::StageError& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const dse::ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return 2;
  } catch (const dse::NumericalError& e) {
    spdlog::error("numerical: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
