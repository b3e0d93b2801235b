#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "dse/linalg.hpp"
#include "dse/power_model.hpp"

namespace dse {

enum class DisturbanceKind { None, LoadScale, MechPowerStep };

/// Temporary change of the true system that the estimators do not know about.
struct Disturbance {
  DisturbanceKind kind = DisturbanceKind::None;
  int target = 0;  ///< bus id (load-scale) or 1-based generator number (mech-power-step)
  double factor = 1.0;
  double t_start = 0.0;
  double t_end = 0.0;
};

enum class FaultKind { CommLoss, GrossError };

struct Fault {
  FaultKind kind = FaultKind::CommLoss;
  std::vector<std::string> channel_names;
  std::vector<int> channels;  ///< stacked measurement indices
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();
  double value = 0.0;  ///< gross-error replacement value
};

struct Scenario {
  std::string name;
  Disturbance disturbance;
  std::vector<Fault> faults;
  double duration = 10.0;
  double dt = 1.0 / 60.0;
  std::uint64_t seed = 0;
  double process_noise = 1e-4;      ///< diagonal of W
  double measurement_noise = 1e-4;  ///< diagonal of R
  double initial_covariance = 1e-4; ///< diagonal of Sigma_0
  bool perturb_truth = false;       ///< also drive the true system with N(0, W)
  std::vector<int> plot_generators; ///< 1-based generator numbers

  /// Checks windows and channel indices against a system with m channels.
  void validate(int n_channels) const;
  int steps() const;
};

/// Scenario text format (version 1), one directive per line:
///
///   dse-scenario 1
///   name <text>
///   duration <s>            step <s>          seed <uint64>
///   process_noise <var>     measurement_noise <var>
///   initial_covariance <var>
///   perturb_truth true|false
///   disturbance load-scale|mech-power-step target=<id> factor=<x> start=<s> end=<s>
///   fault comm-loss channels=<a,b,..> start=<s> end=<s>
///   fault gross-error channels=<a,..> value=<x> start=<s> [end=<s>]
///   plot_generators <g> [<g> ...]
///
/// Channel names are resolved against the case (see channel_index).
Scenario parse_scenario(std::istream& in, const CaseData& case_data);
Scenario load_scenario(const std::filesystem::path& path, const CaseData& case_data);

/// Ground truth sampled on the PMU grid t_k = k dt, k = 0..N.
struct Trajectory {
  std::vector<double> times;
  std::vector<DynamicState> states;
  std::vector<MeasurementFrame> frames;  ///< noise-free
};

/// Integrates the true system from the power-flow equilibrium with the
/// scenario disturbance applied over its window. Throws
/// NumericalError("unstable trajectory") on divergence.
Trajectory simulate_truth(const CaseData& case_data, const Scenario& scenario,
                          const SystemParams& sys);

/// z_k = g(x_k) + v_k with v_k ~ N(0, R). R may be singular (even zero).
std::vector<MeasurementFrame> synthesize_measurements(const Trajectory& traj, const Matrix& R,
                                                      std::uint64_t seed);

/// Overwrites faulted channels: comm-loss zeroes and invalidates channels
/// inside [t_start, t_end]; gross-error sets the value from t_start on
/// (until t_end when given).
std::vector<MeasurementFrame> apply_faults(std::vector<MeasurementFrame> stream,
                                           const Scenario& scenario);

/// Root-mean-square error over every state of every step.
double overall_error(const std::vector<Vector>& estimates, const std::vector<Vector>& truth);
double overall_error(const std::vector<Vector>& estimates, const std::vector<DynamicState>& truth);

}  // namespace dse
