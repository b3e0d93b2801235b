#include "dse/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dse/case_file.hpp"
#include "dse/text_format.hpp"

namespace dse {

namespace {

using Clock = std::chrono::steady_clock;

// Runs `fn`, rethrowing library failures tagged with `stage`.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const NumericalError& e) {
    throw StageError(stage, e.what(), 1);
  } catch (const ConfigError& e) {
    throw StageError(stage, e.what(), 2);
  } catch (const std::ios_base::failure& e) {
    throw StageError(stage, e.what(), 2);
  } catch (const std::filesystem::filesystem_error& e) {
    throw StageError(stage, e.what(), 2);
  }
}

Observation to_observation(const MeasurementFrame& frame) {
  return Observation{frame.stacked(), frame.valid};
}

std::string state_name(int i, int n_gen) {
  return i < n_gen ? "omega_" + std::to_string(i + 1) : "delta_" + std::to_string(i - n_gen + 1);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (filters.empty()) throw ConfigError("no filter selected");
  std::set<FilterKind> seen(filters.begin(), filters.end());
  if (seen.size() != filters.size()) throw ConfigError("a filter is selected twice");
  if (!std::filesystem::exists(case_path)) throw ConfigError("case file not found: " + case_path.string());
  if (!std::filesystem::exists(scenario_path)) {
    throw ConfigError("scenario file not found: " + scenario_path.string());
  }
  huber.validate();
}

Experiment prepare_experiment(CaseData case_data, Scenario scenario) {
  const SystemParams sys = case_data.system_params(scenario.dt);
  auto model = staged("network", [&] {
    return std::make_shared<const PowerSystemModel>(case_data.generator_params(),
                                                    reduce_network(case_data), sys);
  });
  const int n = model->state_dim();
  const int m = model->measurement_dim();
  Trajectory truth = staged("simulation", [&] { return simulate_truth(case_data, scenario, sys); });
  NoiseModel noise = NoiseModel::diagonal(n, scenario.process_noise, m, scenario.measurement_noise);
  std::vector<MeasurementFrame> stream = staged("measurements", [&] {
    return apply_faults(synthesize_measurements(truth, noise.R(), scenario.seed), scenario);
  });
  FilterState initial;
  initial.x_hat = staged("initialization", [&] {
    return equilibrium_state(case_data, model->network(), sys).stacked();
  });
  initial.sigma = scenario.initial_covariance * Matrix::Identity(n, n);
  return Experiment{std::move(case_data), std::move(scenario), sys, std::move(model),
                    std::move(truth), std::move(stream), std::move(noise), std::move(initial)};
}

Experiment prepare_experiment(const RunConfig& config) {
  staged("configuration", [&] { config.validate(); });
  CaseData case_data = staged("case", [&] { return load_case(config.case_path); });
  Scenario scenario = staged("scenario", [&] { return load_scenario(config.scenario_path, case_data); });
  if (config.seed) scenario.seed = *config.seed;
  return prepare_experiment(std::move(case_data), std::move(scenario));
}

FilterRun run_filter(const Experiment& experiment, FilterKind kind, const FilterSettings& settings,
                     const RunOptions& options) {
  const std::string stage = "filter " + std::string(to_string(kind));
  FilterRun run;
  run.kind = kind;
  run.estimates.reserve(experiment.stream.size());
  run.estimates.push_back(experiment.initial.x_hat);
  run.min_covariance_eigenvalue = std::numeric_limits<double>::infinity();

  FilterState fs = experiment.initial;
  Clock::duration elapsed{};
  for (std::size_t k = 1; k < experiment.stream.size(); ++k) {
    const Observation obs = to_observation(experiment.stream[k]);
    const auto start = Clock::now();
    StepOutcome out = staged(stage + " at step " + std::to_string(k), [&] {
      return filter_step(kind, fs, obs, experiment.noise, *experiment.model, settings);
    });
    elapsed += Clock::now() - start;

    if (kind == FilterKind::GmEkf) {
      run.irls_iterations.push_back(out.diagnostics.irls_iterations);
      if (!out.diagnostics.irls_converged) ++run.irls_not_converged;
      if (options.diagnostics) run.objective.push_back(std::move(out.diagnostics.objective));
    }
    if (options.diagnostics) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(out.state.sigma, Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues().minCoeff();
      run.min_covariance_eigenvalue = std::min(run.min_covariance_eigenvalue, lo);
      if (!(lo > 0.0)) ++run.covariance_not_pd;
    }
    if (!out.state.x_hat.allFinite()) {
      throw StageError(stage + " at step " + std::to_string(k), "non-finite estimate", 1);
    }
    fs = std::move(out.state);
    run.estimates.push_back(fs.x_hat);
  }
  run.seconds = std::chrono::duration<double>(elapsed).count();

  const std::vector<Vector> tail(run.estimates.begin() + 1, run.estimates.end());
  const std::vector<DynamicState> truth(experiment.truth.states.begin() + 1,
                                        experiment.truth.states.end());
  run.overall_error = staged("error metric", [&] { return overall_error(tail, truth); });

  if (run.irls_not_converged > 0) {
    run.warnings.push_back("IRLS did not converge in " + std::to_string(run.irls_not_converged) +
                           " steps; last iterate kept");
  }
  if (run.covariance_not_pd > 0) {
    run.warnings.push_back("covariance lost positive definiteness in " +
                           std::to_string(run.covariance_not_pd) + " steps");
  }
  if (!options.diagnostics) run.min_covariance_eigenvalue = 0.0;
  return run;
}

RunReport run(const RunConfig& config) {
  const Experiment experiment = prepare_experiment(config);
  FilterSettings settings;
  settings.gmekf.huber = config.huber;
  settings.mask_invalid = config.mask_invalid;

  RunReport report;
  report.scenario = experiment.scenario.name;
  report.seed = experiment.scenario.seed;
  report.steps = experiment.scenario.steps();
  report.dt = experiment.scenario.dt;
  for (FilterKind kind : config.filters) report.runs.push_back(run_filter(experiment, kind, settings));

  staged("output", [&] {
    std::filesystem::create_directories(config.output_dir);
    {
      auto out = open_output(config.output_dir / "trace.csv");
      write_trace_csv(out, experiment, report.runs);
    }
    {
      auto out = open_output(config.output_dir / "report.json");
      write_report_json(out, report);
    }
    if (config.emit_plots) {
      const int ng = experiment.sys.n_gen;
      std::vector<int> gens = experiment.scenario.plot_generators;
      if (gens.empty()) gens.push_back(1);
      for (int g : gens) {
        for (int block = 0; block < 2; ++block) {
          const int idx = block * ng + g - 1;
          std::vector<PlotSeries> series;
          PlotSeries truth{"truth", {}};
          for (const auto& s : experiment.truth.states) truth.values.push_back(s.stacked()[idx]);
          series.push_back(std::move(truth));
          for (const auto& r : report.runs) {
            PlotSeries est{std::string(to_string(r.kind)), {}};
            for (const auto& x : r.estimates) est.values.push_back(x[idx]);
            series.push_back(std::move(est));
          }
          const std::string name = state_name(idx, ng);
          auto out = open_output(config.output_dir / (name + ".svg"));
          write_svg_plot(out, experiment.scenario.name + ": " + name,
                         block == 0 ? "rotor speed (rad/s)" : "rotor angle (rad)",
                         experiment.truth.times, series);
        }
      }
    }
  });
  return report;
}

// ---------------------------------------------------------------------------

void write_trace_csv(std::ostream& out, const Experiment& experiment,
                     const std::vector<FilterRun>& runs) {
  const int n = experiment.model->state_dim();
  const int ng = experiment.sys.n_gen;
  const std::size_t rows = experiment.truth.times.size();
  for (const auto& r : runs) {
    if (r.estimates.size() != rows) throw ConfigError("estimate count does not match the trace");
  }
  out << "time";
  for (int i = 0; i < n; ++i) {
    out << ",truth_" << state_name(i, ng);
    for (const auto& r : runs) out << ',' << to_string(r.kind) << '_' << state_name(i, ng);
  }
  out << '\n';
  for (std::size_t k = 0; k < rows; ++k) {
    const Vector truth = experiment.truth.states[k].stacked();
    out << text::format_double(experiment.truth.times[k]);
    for (int i = 0; i < n; ++i) {
      out << ',' << text::format_double(truth[i]);
      for (const auto& r : runs) out << ',' << text::format_double(r.estimates[k][i]);
    }
    out << '\n';
  }
  if (!out) throw ConfigError("failed to write trace");
}

int TraceTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("trace has no column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

TraceTable read_trace_csv(std::istream& in) {
  TraceTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace");
  table.header = text::split(line, ',');
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != table.header.size()) {
      throw ConfigError("trace line " + std::to_string(line_no) + " has the wrong field count");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    try {
      for (const auto& f : fields) row.push_back(text::to_double(f));
    } catch (const text::ParseError& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_report_json(std::ostream& out, const RunReport& report) {
  nlohmann::ordered_json j;
  j["scenario"] = report.scenario;
  j["seed"] = report.seed;
  j["steps"] = report.steps;
  j["dt"] = report.dt;
  auto& filters = j["filters"] = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) {
    nlohmann::ordered_json f;
    f["filter"] = to_string(r.kind);
    f["overall_error"] = r.overall_error;
    f["seconds"] = r.seconds;
    f["min_covariance_eigenvalue"] = r.min_covariance_eigenvalue;
    if (r.kind == FilterKind::GmEkf) {
      std::vector<int> sorted = r.irls_iterations;
      std::sort(sorted.begin(), sorted.end());
      f["irls_iterations_median"] =
          sorted.empty() ? 0.0 : 0.5 * (sorted[(sorted.size() - 1) / 2] + sorted[sorted.size() / 2]);
      f["irls_iterations_max"] = sorted.empty() ? 0 : sorted.back();
      f["irls_not_converged"] = r.irls_not_converged;
      f["irls_iterations"] = r.irls_iterations;
    }
    f["warnings"] = r.warnings;
    filters.push_back(std::move(f));
  }
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("failed to write report");
}

void write_svg_plot(std::ostream& out, const std::string& title, const std::string& y_label,
                    const std::vector<double>& times, const std::vector<PlotSeries>& series) {
  if (times.size() < 2) throw ConfigError("plot needs at least two samples");
  for (const auto& s : series) {
    if (s.values.size() != times.size()) throw ConfigError("plot series length mismatch");
  }
  constexpr double kWidth = 800, kHeight = 450;
  constexpr double kLeft = 80, kRight = 130, kTop = 40, kBottom = 50;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-9 * std::max(1.0, std::abs(hi))) {
    lo -= 0.5e-3 * std::max(1.0, std::abs(lo));
    hi += 0.5e-3 * std::max(1.0, std::abs(hi));
  }
  const double t0 = times.front();
  const double t1 = times.back();
  auto px = [&](double t) { return kLeft + (t - t0) / (t1 - t0) * pw; };
  auto py = [&](double v) { return kTop + (hi - v) / (hi - lo) * ph; };
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
  };
  auto escape = [](const std::string& s) {
    std::string e;
    for (char ch : s) {
      if (ch == '<') e += "&lt;";
      else if (ch == '>') e += "&gt;";
      else if (ch == '&') e += "&amp;";
      else e += ch;
    }
    return e;
  };
  static const char* const kColors[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
  static const char* const kDashes[] = {"", "6,3", "2,2", "8,3,2,3", "4,4", "1,3"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = t0 + (t1 - t0) * i / 5.0;
    const double v = lo + (hi - lo) * i / 5.0;
    out << "<line x1=\"" << px(t) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(t) << "\" y2=\""
        << kTop + ph + 5 << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << px(t) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
        << num(t) << "</text>\n";
    out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(v) << "\" x2=\"" << kLeft << "\" y2=\""
        << py(v) << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">time (s)</text>\n";
  out << "<text transform=\"translate(16," << kTop + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    const char* dash = kDashes[s % std::size(kDashes)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\"";
    if (*dash) out << " stroke-dasharray=\"" << dash << "\"";
    out << " points=\"";
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double v = std::clamp(series[s].values[k], lo, hi);
      out << px(times[k]) << ',' << py(v) << ' ';
    }
    out << "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(s);
    out << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 40
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (*dash) out << " stroke-dasharray=\"" << dash << "\"";
    out << "/>\n<text x=\"" << kLeft + pw + 45 << "\" y=\"" << ly + 4 << "\">"
        << escape(series[s].label) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw ConfigError("failed to write plot");
}

// ---------------------------------------------------------------------------

std::vector<BenchRow> bench(const BenchConfig& config) {
  if (config.repeats < 1) throw StageError("configuration", "repeats must be at least 1", 2);
  if (config.jobs < 1) throw StageError("configuration", "jobs must be at least 1", 2);
  if (config.filters.empty()) throw StageError("configuration", "no filter selected", 2);
  if (config.scenario_paths.empty()) throw StageError("configuration", "no scenario given", 2);
  staged("configuration", [&] { config.huber.validate(); });

  const CaseData case_data = staged("case", [&] { return load_case(config.case_path); });
  FilterSettings settings;
  settings.gmekf.huber = config.huber;
  const RunOptions timing_only{.diagnostics = false};

  std::vector<BenchRow> rows;
  for (const auto& path : config.scenario_paths) {
    Scenario scenario = staged("scenario", [&] { return load_scenario(path, case_data); });
    if (config.seed) scenario.seed = *config.seed;
    const Experiment experiment = prepare_experiment(case_data, scenario);
    for (FilterKind kind : config.filters) {
      std::vector<double> seconds(static_cast<std::size_t>(config.repeats));
      std::mutex failure_mutex;
      std::exception_ptr failure;
      auto work = [&](int first, int stride) {
        for (int r = first; r < config.repeats; r += stride) {
          try {
            seconds[static_cast<std::size_t>(r)] =
                run_filter(experiment, kind, settings, timing_only).seconds;
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      };
      const int workers = std::min(config.jobs, config.repeats);
      if (workers == 1) {
        work(0, 1);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
        for (auto& t : pool) t.join();
      }
      if (failure) std::rethrow_exception(failure);

      BenchRow row;
      row.scenario = experiment.scenario.name;
      row.kind = kind;
      row.repeats = config.repeats;
      double sum = 0.0;
      for (double s : seconds) sum += s;
      row.mean_seconds = sum / config.repeats;
      if (config.repeats > 1) {
        double ss = 0.0;
        for (double s : seconds) ss += (s - row.mean_seconds) * (s - row.mean_seconds);
        row.std_seconds = std::sqrt(ss / (config.repeats - 1));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "scenario,filter,repeats,mean_seconds,std_seconds\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << to_string(r.kind) << ',' << r.repeats << ','
        << text::format_double(r.mean_seconds) << ',' << text::format_double(r.std_seconds) << '\n';
  }
}

}  // namespace dse
