#include "dse/power_model.hpp"

#include <cmath>
#include <numbers>
#include <queue>
#include <string>

#include "dse/error.hpp"

namespace dse {

namespace {

void require_dims(const DynamicState& state, std::span<const GeneratorParams> gens,
                  const ReducedNetwork& net) {
  const auto n = static_cast<Eigen::Index>(gens.size());
  if (state.omega.size() != n || state.delta.size() != n || net.G.rows() != n ||
      net.B.rows() != n) {
    throw ConfigError("dimension mismatch between state, generators and reduced network");
  }
}

// E_j cos(delta_j) and E_j sin(delta_j).
void emf_components(const Vector& delta, std::span<const GeneratorParams> gens, Vector& c,
                    Vector& s) {
  const auto n = delta.size();
  c.resize(n);
  s.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    c[j] = gens[j].emf_e * std::cos(delta[j]);
    s[j] = gens[j].emf_e * std::sin(delta[j]);
  }
}

// dP_i/d delta_j for the reduced-network power injections.
Matrix power_angle_jacobian(const Vector& delta, std::span<const GeneratorParams> gens,
                            const ReducedNetwork& net) {
  Vector c;
  Vector s;
  emf_components(delta, gens, c, s);
  const auto n = delta.size();
  Matrix dp(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double sin_ij = s[i] * c[j] - c[i] * s[j];  // E_i E_j sin(d_i - d_j)
      const double cos_ij = c[i] * c[j] + s[i] * s[j];  // E_i E_j cos(d_i - d_j)
      dp(i, j) = net.G(i, j) * sin_ij - net.B(i, j) * cos_ij;
      diag -= dp(i, j);
    }
    dp(i, i) = diag;
  }
  return dp;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

void GeneratorParams::validate() const {
  if (!(inertia_h > 0.0)) throw ConfigError("generator inertia H must be positive");
  if (!(emf_e > 0.0)) throw ConfigError("generator internal EMF E must be positive");
  if (!(xd_prime > 0.0)) throw ConfigError("generator xd' must be positive");
  if (!(damping_d >= 0.0)) throw ConfigError("generator damping D must be non-negative");
}

void SystemParams::validate() const {
  if (!(omega_s > 0.0)) throw ConfigError("synchronous speed must be positive");
  if (n_gen < 1) throw ConfigError("system needs at least one generator");
  if (n_bus < n_gen) throw ConfigError("system has fewer buses than generators");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
}

int CaseData::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return static_cast<int>(i);
  }
  throw ConfigError("unknown bus id " + std::to_string(id));
}

std::vector<GeneratorParams> CaseData::generator_params() const {
  std::vector<GeneratorParams> out;
  out.reserve(generators.size());
  for (const auto& g : generators) out.push_back(g.params);
  return out;
}

SystemParams CaseData::system_params(double dt) const {
  SystemParams sys{2.0 * std::numbers::pi * frequency_hz, n_gen(), n_bus(), dt};
  sys.validate();
  return sys;
}

Vector DynamicState::stacked() const {
  Vector x(omega.size() + delta.size());
  x << omega, delta;
  return x;
}

DynamicState DynamicState::from_stacked(const Vector& x) {
  if (x.size() % 2 != 0) throw ConfigError("stacked state must have even length");
  const auto n = x.size() / 2;
  return DynamicState{x.head(n), x.tail(n)};
}

Vector MeasurementFrame::stacked() const {
  Vector z(size());
  z << P, Q, V, theta;
  return z;
}

MeasurementFrame MeasurementFrame::from_stacked(const Vector& z, int n_gen, int n_bus,
                                                double timestamp) {
  if (z.size() != 2 * n_gen + 2 * n_bus) throw ConfigError("measurement vector has wrong length");
  MeasurementFrame f;
  f.P = z.segment(0, n_gen);
  f.Q = z.segment(n_gen, n_gen);
  f.V = z.segment(2 * n_gen, n_bus);
  f.theta = z.segment(2 * n_gen + n_bus, n_bus);
  f.valid.assign(static_cast<std::size_t>(z.size()), true);
  f.timestamp = timestamp;
  return f;
}

int channel_index(std::string_view name, const CaseData& case_data) {
  auto number_after = [&](std::size_t prefix) {
    const std::string digits(name.substr(prefix));
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("malformed channel name '" + std::string(name) + "'");
    }
    return std::stoi(digits);
  };
  const int ng = case_data.n_gen();
  const int nb = case_data.n_bus();
  if (name.starts_with("theta")) return 2 * ng + nb + case_data.bus_index(number_after(5));
  if (name.starts_with("V")) return 2 * ng + case_data.bus_index(number_after(1));
  if (name.starts_with("P") || name.starts_with("Q")) {
    const int g = number_after(1);
    if (g < 1 || g > ng) throw ConfigError("generator number out of range in channel '" + std::string(name) + "'");
    return (name[0] == 'P' ? 0 : ng) + g - 1;
  }
  throw ConfigError("unknown channel kind in '" + std::string(name) + "'");
}

std::string channel_name(int index, const CaseData& case_data) {
  const int ng = case_data.n_gen();
  const int nb = case_data.n_bus();
  if (index < 0 || index >= 2 * ng + 2 * nb) throw ConfigError("channel index out of range");
  if (index < ng) return "P" + std::to_string(index + 1);
  if (index < 2 * ng) return "Q" + std::to_string(index - ng + 1);
  if (index < 2 * ng + nb) return "V" + std::to_string(case_data.buses[index - 2 * ng].id);
  return "theta" + std::to_string(case_data.buses[index - 2 * ng - nb].id);
}

ReducedNetwork reduce_network(const CaseData& case_data) {
  const int nb = case_data.n_bus();
  const int ng = case_data.n_gen();
  if (ng < 1) throw ConfigError("case has no generators");
  for (const auto& g : case_data.generators) g.params.validate();

  // Connectivity over branches; generators only hang off existing buses.
  std::vector<std::vector<int>> adjacency(nb);
  ComplexMatrix ybus = ComplexMatrix::Zero(nb, nb);
  for (const auto& br : case_data.branches) {
    const int f = case_data.bus_index(br.from);
    const int t = case_data.bus_index(br.to);
    if (br.r == 0.0 && br.x == 0.0) throw ConfigError("branch with zero impedance");
    if (!(br.tap > 0.0)) throw ConfigError("branch tap ratio must be positive");
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex charging(0.0, 0.5 * br.b_shunt);
    ybus(f, f) += (ys + charging) / (br.tap * br.tap);
    ybus(t, t) += ys + charging;
    ybus(f, t) -= ys / br.tap;
    ybus(t, f) -= ys / br.tap;
    adjacency[f].push_back(t);
    adjacency[t].push_back(f);
  }
  std::vector<bool> seen(nb, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int reached = 1;
  while (!frontier.empty()) {
    const int b = frontier.front();
    frontier.pop();
    for (int nbr : adjacency[b]) {
      if (!seen[nbr]) {
        seen[nbr] = true;
        ++reached;
        frontier.push(nbr);
      }
    }
  }
  if (reached != nb) throw NumericalError("island detected");

  const int na = nb + ng;
  ReducedNetwork net;
  net.y_aug = ComplexMatrix::Zero(na, na);
  net.y_aug.topLeftCorner(nb, nb) = ybus;
  for (int b = 0; b < nb; ++b) {
    const auto& bus = case_data.buses[b];
    if (bus.load_p != 0.0 || bus.load_q != 0.0) {
      if (!(bus.vm > 0.0)) throw ConfigError("loaded bus needs a positive solved voltage");
      net.y_aug(b, b) += Complex(bus.load_p, -bus.load_q) / (bus.vm * bus.vm);
    }
  }
  net.terminal_bus.resize(ng);
  for (int i = 0; i < ng; ++i) {
    const auto& g = case_data.generators[i];
    const int b = case_data.bus_index(g.bus);
    net.terminal_bus[i] = b;
    const Complex y = 1.0 / Complex(0.0, g.params.xd_prime);
    const int k = nb + i;
    net.y_aug(b, b) += y;
    net.y_aug(k, k) += y;
    net.y_aug(b, k) -= y;
    net.y_aug(k, b) -= y;
  }

  const ComplexMatrix ybb = net.y_aug.topLeftCorner(nb, nb);
  Eigen::FullPivLU<ComplexMatrix> lu(ybb);
  if (!lu.isInvertible()) throw NumericalError("network not reducible");
  net.voltage_map = -lu.solve(net.y_aug.topRightCorner(nb, ng));
  if (!net.voltage_map.allFinite()) throw NumericalError("network not reducible");
  const ComplexMatrix yred =
      net.y_aug.bottomRightCorner(ng, ng) + net.y_aug.bottomLeftCorner(ng, nb) * net.voltage_map;
  // Reduction of a symmetric matrix is symmetric; drop round-off asymmetry.
  net.G = symmetrized(yred.real());
  net.B = symmetrized(yred.imag());
  return net;
}

Vector electrical_power(const DynamicState& state, const ReducedNetwork& net,
                        std::span<const GeneratorParams> gens) {
  require_dims(state, gens, net);
  Vector c;
  Vector s;
  emf_components(state.delta, gens, c, s);
  // P_i = sum_j E_i E_j [G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j)]
  return c.cwiseProduct(net.G * c - net.B * s) + s.cwiseProduct(net.G * s + net.B * c);
}

Vector swing_derivative(const DynamicState& state, std::span<const GeneratorParams> gens,
                        const ReducedNetwork& net, const SystemParams& sys) {
  const Vector pe = electrical_power(state, net, gens);
  const auto n = state.n_gen();
  Vector dx(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& g = gens[i];
    const double slip = state.omega[i] - sys.omega_s;
    dx[i] = sys.omega_s / (2.0 * g.inertia_h) * (g.mech_power_pm - pe[i] - g.damping_d * slip);
    dx[n + i] = slip;
  }
  return dx;
}

Matrix swing_jacobian(const DynamicState& state, std::span<const GeneratorParams> gens,
                      const ReducedNetwork& net, const SystemParams& sys) {
  require_dims(state, gens, net);
  const auto n = state.n_gen();
  const Matrix dp = power_angle_jacobian(state.delta, gens, net);
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = sys.omega_s / (2.0 * gens[i].inertia_h);
    j(i, i) = -k * gens[i].damping_d;
    j.block(i, n, 1, n) = -k * dp.row(i);
    j(n + i, i) = 1.0;
  }
  return j;
}

DynamicState discretize_step(const DynamicState& state, double dt,
                             std::span<const GeneratorParams> gens, const ReducedNetwork& net,
                             const SystemParams& sys) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  const Vector x = state.stacked();
  auto f = [&](const Vector& xs) {
    return swing_derivative(DynamicState::from_stacked(xs), gens, net, sys);
  };
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  const Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!all_finite(next)) throw NumericalError("integration diverged");
  return DynamicState::from_stacked(next);
}

Matrix jacobian_F(const DynamicState& state, double dt, std::span<const GeneratorParams> gens,
                  const ReducedNetwork& net, const SystemParams& sys) {
  const Vector x = state.stacked();
  const auto n = x.size();
  const Matrix eye = Matrix::Identity(n, n);
  auto f = [&](const Vector& xs) {
    return swing_derivative(DynamicState::from_stacked(xs), gens, net, sys);
  };
  auto jac = [&](const Vector& xs) {
    return swing_jacobian(DynamicState::from_stacked(xs), gens, net, sys);
  };
  // Stage k_s depends on x through its evaluation point; chain rule per stage.
  const Vector k1 = f(x);
  const Matrix d1 = jac(x);
  const Vector x2 = x + 0.5 * dt * k1;
  const Vector k2 = f(x2);
  const Matrix d2 = jac(x2) * (eye + 0.5 * dt * d1);
  const Vector x3 = x + 0.5 * dt * k2;
  const Vector k3 = f(x3);
  const Matrix d3 = jac(x3) * (eye + 0.5 * dt * d2);
  const Vector x4 = x + dt * k3;
  const Matrix d4 = jac(x4) * (eye + dt * d3);
  return eye + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
}

MeasurementFrame measurement_fn(const DynamicState& state, const ReducedNetwork& net,
                                std::span<const GeneratorParams> gens, const SystemParams& sys) {
  require_dims(state, gens, net);
  const auto ng = state.n_gen();
  const auto nb = net.n_bus();
  if (nb != sys.n_bus) throw ConfigError("reduced network and system disagree on bus count");

  ComplexVector emf(ng);
  for (Eigen::Index j = 0; j < ng; ++j) emf[j] = std::polar(gens[j].emf_e, state.delta[j]);
  const ComplexVector vbus = net.voltage_map * emf;
  if (!vbus.allFinite()) throw NumericalError("network solve failed");

  MeasurementFrame frame;
  frame.P = electrical_power(state, net, gens);
  frame.Q.resize(ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const Complex vt = vbus[net.terminal_bus[i]];
    const Complex current = (emf[i] - vt) / Complex(0.0, gens[i].xd_prime);
    frame.Q[i] = (vt * std::conj(current)).imag();
  }
  frame.V = vbus.cwiseAbs();
  frame.theta.resize(nb);
  for (Eigen::Index b = 0; b < nb; ++b) frame.theta[b] = std::arg(vbus[b]);
  frame.valid.assign(static_cast<std::size_t>(frame.size()), true);
  return frame;
}

Matrix jacobian_H(const DynamicState& state, const ReducedNetwork& net,
                  std::span<const GeneratorParams> gens, const SystemParams& sys) {
  constexpr double kStep = 1e-6;
  const Vector x = state.stacked();
  const auto n = x.size();
  const auto m = 2 * sys.n_gen + 2 * sys.n_bus;
  Matrix h(m, n);
  Vector xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    xp[j] = x[j] + kStep;
    const Vector up = measurement_fn(DynamicState::from_stacked(xp), net, gens, sys).stacked();
    xp[j] = x[j] - kStep;
    const Vector dn = measurement_fn(DynamicState::from_stacked(xp), net, gens, sys).stacked();
    xp[j] = x[j];
    Vector diff = up - dn;
    // Angle channels can straddle the +-pi cut.
    for (Eigen::Index k = 2 * sys.n_gen + sys.n_bus; k < m; ++k) {
      diff[k] = std::remainder(diff[k], 2.0 * std::numbers::pi);
    }
    h.col(j) = diff / (2.0 * kStep);
  }
  return h;
}

DynamicState equilibrium_state(const CaseData& case_data, const ReducedNetwork& net,
                               const SystemParams& sys) {
  const int nb = case_data.n_bus();
  const int ng = case_data.n_gen();
  ComplexVector v(nb);
  for (int b = 0; b < nb; ++b) v[b] = std::polar(case_data.buses[b].vm, case_data.buses[b].va);
  // Network-only injections: remove loads and machine links from the augmented matrix.
  ComplexMatrix ybus = net.y_aug.topLeftCorner(nb, nb);
  for (int b = 0; b < nb; ++b) {
    const auto& bus = case_data.buses[b];
    if (bus.load_p != 0.0 || bus.load_q != 0.0) {
      ybus(b, b) -= Complex(bus.load_p, -bus.load_q) / (bus.vm * bus.vm);
    }
  }
  for (int i = 0; i < ng; ++i) {
    ybus(net.terminal_bus[i], net.terminal_bus[i]) -=
        1.0 / Complex(0.0, case_data.generators[i].params.xd_prime);
  }
  const ComplexVector injection = v.cwiseProduct((ybus * v).conjugate());

  DynamicState state{Vector::Constant(ng, sys.omega_s), Vector(ng)};
  std::vector<bool> used(nb, false);
  for (int i = 0; i < ng; ++i) {
    const int b = net.terminal_bus[i];
    if (used[b]) throw ConfigError("at most one generator per bus is supported");
    used[b] = true;
    const auto& bus = case_data.buses[b];
    const Complex s_gen = injection[b] + Complex(bus.load_p, bus.load_q);
    const Complex current = std::conj(s_gen / v[b]);
    const Complex emf = v[b] + Complex(0.0, case_data.generators[i].params.xd_prime) * current;
    state.delta[i] = std::arg(emf);
  }
  return state;
}

PowerSystemModel::PowerSystemModel(std::vector<GeneratorParams> gens, ReducedNetwork net,
                                   SystemParams sys)
    : gens_(std::move(gens)), net_(std::move(net)), sys_(sys) {
  sys_.validate();
  for (const auto& g : gens_) g.validate();
  if (static_cast<int>(gens_.size()) != sys_.n_gen || net_.n_gen() != sys_.n_gen ||
      net_.n_bus() != sys_.n_bus) {
    throw ConfigError("generator, network and system dimensions disagree");
  }
}

Vector PowerSystemModel::propagate(const Vector& x) const {
  return discretize_step(DynamicState::from_stacked(x), sys_.dt, gens_, net_, sys_).stacked();
}

Matrix PowerSystemModel::transition_jacobian(const Vector& x) const {
  return jacobian_F(DynamicState::from_stacked(x), sys_.dt, gens_, net_, sys_);
}

Vector PowerSystemModel::measure(const Vector& x) const {
  return measurement_fn(DynamicState::from_stacked(x), net_, gens_, sys_).stacked();
}

Matrix PowerSystemModel::measurement_jacobian(const Vector& x) const {
  return jacobian_H(DynamicState::from_stacked(x), net_, gens_, sys_);
}

Vector PowerSystemModel::innovation(const Vector& z, const Vector& predicted) const {
  Vector d = z - predicted;
  const int first_angle = 2 * sys_.n_gen + sys_.n_bus;
  for (Eigen::Index k = first_angle; k < d.size(); ++k) {
    d[k] = std::remainder(d[k], 2.0 * std::numbers::pi);
  }
  return d;
}

Vector PowerSystemModel::leverage_coordinates(const Vector& x) const {
  const auto n = sys_.n_gen;
  Vector rel(2 * n);
  rel.head(n) = x.head(n).array() - x[0];
  rel.tail(n) = x.tail(n).array() - x[n];
  return rel;
}

}  // namespace dse
