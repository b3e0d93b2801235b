#include "dse/simulator.hpp"

#include <cmath>
#include <random>

#include "dse/error.hpp"

namespace dse {

namespace {

constexpr double kTimeSlack = 1e-9;

bool inside_half_open(double t, double start, double end) {
  return t >= start - kTimeSlack && t < end - kTimeSlack;
}

bool inside_closed(double t, double start, double end) {
  return t >= start - kTimeSlack && t <= end + kTimeSlack;
}

// Draws from N(0, cov) as factor * u, u standard normal. Handles singular cov.
Matrix noise_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw ConfigError("noise covariance must be square");
  if (cov.isZero(0.0)) return Matrix::Zero(cov.rows(), cov.cols());
  if (cov.isDiagonal(0.0)) {
    const Vector d = cov.diagonal();
    if ((d.array() < 0.0).any()) throw ConfigError("noise covariance has negative variance");
    return d.cwiseSqrt().asDiagonal();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if ((eig.eigenvalues().array() < -1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff()).any()) {
    throw ConfigError("noise covariance is not positive semidefinite");
  }
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

void Scenario::validate(int n_channels) const {
  if (!(duration > 0.0)) throw ConfigError("scenario duration must be positive");
  if (!(dt > 0.0) || dt > duration) throw ConfigError("scenario step must be in (0, duration]");
  if (!(process_noise > 0.0) || !(measurement_noise >= 0.0) || !(initial_covariance > 0.0)) {
    throw ConfigError("noise variances must be positive");
  }
  auto check_window = [&](double start, double end, bool open_end) {
    if (!(start >= 0.0) || !(start < end) || (!open_end && end > duration + kTimeSlack)) {
      throw ConfigError("invalid time window [" + std::to_string(start) + ", " + std::to_string(end) +
                        "]");
    }
  };
  if (disturbance.kind != DisturbanceKind::None) {
    check_window(disturbance.t_start, disturbance.t_end, false);
    if (!(disturbance.factor >= 0.0)) throw ConfigError("disturbance factor must be non-negative");
  }
  for (const auto& f : faults) {
    check_window(f.t_start, f.t_end, std::isinf(f.t_end));
    if (f.channels.empty()) throw ConfigError("fault lists no channels");
    for (int c : f.channels) {
      if (c < 0 || c >= n_channels) throw ConfigError("fault channel index out of range");
    }
  }
}

int Scenario::steps() const { return static_cast<int>(std::lround(duration / dt)); }

Trajectory simulate_truth(const CaseData& case_data, const Scenario& scenario,
                          const SystemParams& sys) {
  scenario.validate(2 * sys.n_gen + 2 * sys.n_bus);
  const ReducedNetwork nominal_net = reduce_network(case_data);
  const std::vector<GeneratorParams> nominal_gens = case_data.generator_params();

  ReducedNetwork disturbed_net = nominal_net;
  std::vector<GeneratorParams> disturbed_gens = nominal_gens;
  const auto& dist = scenario.disturbance;
  if (dist.kind == DisturbanceKind::LoadScale) {
    CaseData modified = case_data;
    auto& bus = modified.buses[static_cast<std::size_t>(case_data.bus_index(dist.target))];
    bus.load_p *= dist.factor;
    bus.load_q *= dist.factor;
    disturbed_net = reduce_network(modified);
  } else if (dist.kind == DisturbanceKind::MechPowerStep) {
    if (dist.target < 1 || dist.target > sys.n_gen) throw ConfigError("disturbance generator out of range");
    disturbed_gens[static_cast<std::size_t>(dist.target - 1)].mech_power_pm *= dist.factor;
  }
  auto disturbed_at = [&](double t) {
    return dist.kind != DisturbanceKind::None && inside_half_open(t, dist.t_start, dist.t_end);
  };

  const int steps = scenario.steps();
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.frames.reserve(steps + 1);

  std::mt19937_64 process_rng(scenario.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> standard_normal;
  const double process_sd = std::sqrt(scenario.process_noise);

  DynamicState x = equilibrium_state(case_data, nominal_net, sys);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * scenario.dt;
    if (k > 0) {
      const double t_prev = (k - 1) * scenario.dt;
      const bool dist_on = disturbed_at(t_prev);
      try {
        x = discretize_step(x, scenario.dt, dist_on ? disturbed_gens : nominal_gens,
                            dist_on ? disturbed_net : nominal_net, sys);
      } catch (const NumericalError&) {
        throw NumericalError("unstable trajectory");
      }
      if (scenario.perturb_truth) {
        for (Eigen::Index i = 0; i < x.omega.size(); ++i) x.omega[i] += process_sd * standard_normal(process_rng);
        for (Eigen::Index i = 0; i < x.delta.size(); ++i) x.delta[i] += process_sd * standard_normal(process_rng);
      }
    }
    const bool dist_on = disturbed_at(t);
    MeasurementFrame frame = measurement_fn(x, dist_on ? disturbed_net : nominal_net,
                                            dist_on ? disturbed_gens : nominal_gens, sys);
    frame.timestamp = t;
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.frames.push_back(std::move(frame));
  }
  return traj;
}

std::vector<MeasurementFrame> synthesize_measurements(const Trajectory& traj, const Matrix& R,
                                                      std::uint64_t seed) {
  std::vector<MeasurementFrame> out;
  out.reserve(traj.frames.size());
  if (traj.frames.empty()) return out;
  const int m = traj.frames.front().size();
  if (R.rows() != m) throw ConfigError("measurement covariance does not match the frame length");
  const Matrix factor = noise_factor(R);
  const bool diagonal = factor.isDiagonal(0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> standard_normal;
  Vector u(m);
  for (const auto& frame : traj.frames) {
    for (int i = 0; i < m; ++i) u[i] = standard_normal(rng);
    const Vector noise = diagonal ? Vector(factor.diagonal().cwiseProduct(u)) : Vector(factor * u);
    const auto ng = frame.P.size();
    const auto nb = frame.V.size();
    MeasurementFrame noisy = MeasurementFrame::from_stacked(
        frame.stacked() + noise, static_cast<int>(ng), static_cast<int>(nb), frame.timestamp);
    noisy.valid = frame.valid;
    out.push_back(std::move(noisy));
  }
  return out;
}

std::vector<MeasurementFrame> apply_faults(std::vector<MeasurementFrame> stream,
                                           const Scenario& scenario) {
  for (auto& frame : stream) {
    Vector z;
    bool touched = false;
    for (const auto& fault : scenario.faults) {
      if (!inside_closed(frame.timestamp, fault.t_start, fault.t_end)) continue;
      if (!touched) {
        z = frame.stacked();
        touched = true;
      }
      for (int c : fault.channels) {
        if (c < 0 || c >= z.size()) throw ConfigError("fault channel index out of range");
        if (fault.kind == FaultKind::CommLoss) {
          z[c] = 0.0;
          frame.valid[static_cast<std::size_t>(c)] = false;
        } else {
          z[c] = fault.value;
        }
      }
    }
    if (touched) {
      std::vector<bool> valid = std::move(frame.valid);
      frame = MeasurementFrame::from_stacked(z, static_cast<int>(frame.P.size()),
                                             static_cast<int>(frame.V.size()), frame.timestamp);
      frame.valid = std::move(valid);
    }
  }
  return stream;
}

double overall_error(const std::vector<Vector>& estimates, const std::vector<Vector>& truth) {
  if (estimates.size() != truth.size() || estimates.empty()) {
    throw ConfigError("estimate and truth sequences differ in length");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (estimates[k].size() != truth[k].size()) throw ConfigError("state length mismatch");
    sum += (estimates[k] - truth[k]).squaredNorm();
    count += static_cast<std::size_t>(truth[k].size());
  }
  return std::sqrt(sum / static_cast<double>(count));
}

double overall_error(const std::vector<Vector>& estimates, const std::vector<DynamicState>& truth) {
  std::vector<Vector> stacked;
  stacked.reserve(truth.size());
  for (const auto& s : truth) stacked.push_back(s.stacked());
  return overall_error(estimates, stacked);
}

}  // namespace dse
