#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dse/case_file.hpp"
#include "dse/power_model.hpp"

namespace dse::testing {

inline std::string data_path(const std::string& rel) { return std::string(DSE_SOURCE_DIR) + "/" + rel; }

inline const CaseData& ieee39() {
  static const CaseData data = load_case(data_path("data/ieee39.case"));
  return data;
}

/// Three buses in a triangle, machines at buses 1 and 2, a load at bus 3.
/// `lossless` drops resistance, charging and loads so the reduced network is
/// purely susceptive.
inline CaseData small_case(bool lossless = false) {
  CaseData c;
  c.buses = {{1, 0.0, 0.0, 1.0, 0.0}, {2, 0.0, 0.0, 1.0, 0.0}, {3, lossless ? 0.0 : 0.9, lossless ? 0.0 : 0.3, 0.98, -0.05}};
  const double r = lossless ? 0.0 : 0.01;
  const double b = lossless ? 0.0 : 0.02;
  c.branches = {{1, 2, r, 0.10, b, 1.0}, {2, 3, r, 0.12, b, 1.0}, {1, 3, r, 0.15, b, lossless ? 1.0 : 1.02}};
  GeneratorParams g1{30.0, 0.0, 0.5, 1.05, 0.2};
  GeneratorParams g2{40.0, 0.0, 0.4, 1.02, 0.25};
  c.generators = {{1, g1}, {2, g2}};
  return c;
}

/// Equilibrium of the 39-bus case plus uniform noise of the given half-widths.
inline DynamicState random_state(std::mt19937_64& rng, const DynamicState& base, double omega_spread,
                                 double delta_spread) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DynamicState s = base;
  for (Eigen::Index i = 0; i < s.omega.size(); ++i) s.omega[i] += omega_spread * u(rng);
  for (Eigen::Index i = 0; i < s.delta.size(); ++i) s.delta[i] += delta_spread * u(rng);
  return s;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1.0) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(floor, b.cwiseAbs().maxCoeff());
}

}  // namespace dse::testing
