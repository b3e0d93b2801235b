#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dse/linalg.hpp"
#include "dse/state_space.hpp"

namespace dse {

/// Classical (second-order) machine constants, per-unit on the system base.
struct GeneratorParams {
  double inertia_h = 0.0;      ///< H, seconds
  double damping_d = 0.0;      ///< D, pu power per rad/s of speed deviation
  double mech_power_pm = 0.0;  ///< constant mechanical input
  double emf_e = 0.0;          ///< internal voltage magnitude behind xd'
  double xd_prime = 0.0;       ///< transient reactance

  void validate() const;
};

struct SystemParams {
  double omega_s = 0.0;  ///< synchronous speed, rad/s
  int n_gen = 0;
  int n_bus = 0;
  double dt = 0.0;  ///< integration and PMU reporting step, seconds

  void validate() const;
};

// Raw network tables as read from a case file.

struct BusRecord {
  int id = 0;
  double load_p = 0.0;
  double load_q = 0.0;
  double vm = 1.0;  ///< solved voltage magnitude
  double va = 0.0;  ///< solved voltage angle, rad
};

struct BranchRecord {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;  ///< total line charging
  double tap = 1.0;      ///< off-nominal ratio at the from end
};

struct GeneratorRecord {
  int bus = 0;
  GeneratorParams params;
};

struct CaseData {
  double base_mva = 100.0;
  double frequency_hz = 60.0;
  std::vector<BusRecord> buses;
  std::vector<BranchRecord> branches;
  std::vector<GeneratorRecord> generators;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_gen() const { return static_cast<int>(generators.size()); }
  /// Position of bus `id` in `buses`; throws ConfigError when absent.
  int bus_index(int id) const;
  std::vector<GeneratorParams> generator_params() const;
  SystemParams system_params(double dt) const;
};

/// Network reduced to the generator internal nodes.
///
/// `y_aug` orders the n_bus network buses first, then the n_gen internal EMF
/// nodes. `voltage_map` is -Y_bb^{-1} Y_bg, so bus phasors are
/// `voltage_map * E` for internal EMF phasors E.
struct ReducedNetwork {
  Matrix G;
  Matrix B;
  ComplexMatrix y_aug;
  ComplexMatrix voltage_map;
  std::vector<int> terminal_bus;  ///< bus index of each generator's terminal

  int n_gen() const { return static_cast<int>(G.rows()); }
  int n_bus() const { return static_cast<int>(voltage_map.rows()); }
};

/// Rotor speeds (absolute, rad/s) and rotor angles (rad).
///
/// The stacked form used by the filters is x = [omega_1..omega_n, delta_1..delta_n].
struct DynamicState {
  Vector omega;
  Vector delta;

  int n_gen() const { return static_cast<int>(delta.size()); }
  Vector stacked() const;
  static DynamicState from_stacked(const Vector& x);
};

/// One PMU snapshot. Stacked order is [P; Q; V; theta], m = 2 n_gen + 2 n_bus.
/// Channels flagged invalid carry the value zero.
struct MeasurementFrame {
  Vector P;
  Vector Q;
  Vector V;
  Vector theta;
  std::vector<bool> valid;
  double timestamp = 0.0;

  int size() const { return static_cast<int>(P.size() + Q.size() + V.size() + theta.size()); }
  Vector stacked() const;
  static MeasurementFrame from_stacked(const Vector& z, int n_gen, int n_bus, double timestamp = 0.0);
};

/// Stacked measurement index of a channel named "P<g>", "Q<g>" (1-based
/// generator number), "V<id>" or "theta<id>" (bus id from the case).
int channel_index(std::string_view name, const CaseData& case_data);
/// Inverse of channel_index.
std::string channel_name(int index, const CaseData& case_data);

/// Kron-reduces the augmented admittance matrix onto the generator internal
/// nodes. Loads become constant admittances at their solved voltage.
ReducedNetwork reduce_network(const CaseData& case_data);

Vector electrical_power(const DynamicState& state, const ReducedNetwork& net,
                        std::span<const GeneratorParams> gens);

/// Stacked time derivative [d omega/dt; d delta/dt] of the swing equations.
Vector swing_derivative(const DynamicState& state, std::span<const GeneratorParams> gens,
                        const ReducedNetwork& net, const SystemParams& sys);

/// Jacobian of swing_derivative with respect to the stacked state.
Matrix swing_jacobian(const DynamicState& state, std::span<const GeneratorParams> gens,
                      const ReducedNetwork& net, const SystemParams& sys);

/// One classical RK4 step of length dt. Throws NumericalError on a
/// non-finite result.
DynamicState discretize_step(const DynamicState& state, double dt,
                             std::span<const GeneratorParams> gens, const ReducedNetwork& net,
                             const SystemParams& sys);

/// Exact derivative of the RK4 map, propagated through the four stages.
Matrix jacobian_F(const DynamicState& state, double dt, std::span<const GeneratorParams> gens,
                  const ReducedNetwork& net, const SystemParams& sys);

/// Noise-free measurements. Q is the reactive power leaving each machine
/// terminal; V and theta are bus phasors from the augmented network solve.
MeasurementFrame measurement_fn(const DynamicState& state, const ReducedNetwork& net,
                                std::span<const GeneratorParams> gens, const SystemParams& sys);

/// Central finite-difference Jacobian of measurement_fn (step 1e-6).
Matrix jacobian_H(const DynamicState& state, const ReducedNetwork& net,
                  std::span<const GeneratorParams> gens, const SystemParams& sys);

/// Pre-disturbance operating point: omega = omega_s and the internal angles
/// implied by the solved bus voltages and generator injections.
DynamicState equilibrium_state(const CaseData& case_data, const ReducedNetwork& net,
                               const SystemParams& sys);

/// The multimachine model packaged for the estimators.
class PowerSystemModel final : public StateSpaceModel {
 public:
  PowerSystemModel(std::vector<GeneratorParams> gens, ReducedNetwork net, SystemParams sys);

  int state_dim() const override { return 2 * sys_.n_gen; }
  int measurement_dim() const override { return 2 * sys_.n_gen + 2 * sys_.n_bus; }

  Vector propagate(const Vector& x) const override;
  Matrix transition_jacobian(const Vector& x) const override;
  Vector measure(const Vector& x) const override;
  Matrix measurement_jacobian(const Vector& x) const override;
  Vector innovation(const Vector& z, const Vector& predicted) const override;
  /// Speeds and angles relative to generator 1.
  Vector leverage_coordinates(const Vector& x) const override;

  const std::vector<GeneratorParams>& generators() const { return gens_; }
  const ReducedNetwork& network() const { return net_; }
  const SystemParams& system() const { return sys_; }

 private:
  std::vector<GeneratorParams> gens_;
  ReducedNetwork net_;
  SystemParams sys_;
};

}  // namespace dse
