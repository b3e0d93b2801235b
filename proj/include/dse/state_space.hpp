#pragma once

#include "dse/linalg.hpp"

namespace dse {

/// Discrete-time nonlinear model x_k = f(x_{k-1}), z_k = g(x_k) seen by the
/// estimators. Noise is additive and supplied separately (NoiseModel).
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual int state_dim() const = 0;
  virtual int measurement_dim() const = 0;

  virtual Vector propagate(const Vector& x) const = 0;
  virtual Matrix transition_jacobian(const Vector& x) const = 0;

  virtual Vector measure(const Vector& x) const = 0;
  virtual Matrix measurement_jacobian(const Vector& x) const = 0;

  /// z - g(x). Models with angle channels override this to wrap differences.
  virtual Vector innovation(const Vector& z, const Vector& predicted) const {
    return z - predicted;
  }

  /// Coordinates of a state used in the leverage (projection-statistics)
  /// matrix of the GM-EKF.
  virtual Vector leverage_coordinates(const Vector& x) const { return x; }
};

}  // namespace dse
