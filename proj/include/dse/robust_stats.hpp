#pragma once

#include "dse/linalg.hpp"

namespace dse {

/// Tuning of the GM-estimator.
struct HuberConfig {
  double c = 1.5;         ///< Huber breakpoint
  double d = 1.5;         ///< projection-statistics threshold of the weight function
  double irls_tol = 0.01; ///< max-norm change between IRLS iterates
  int max_irls_iters = 50;

  void validate() const;
};

/// Projection statistics and the leverage weights derived from them.
struct RobustWeights {
  Vector ps;
  Vector w;
};

/// Gaussian consistency factor of the median absolute deviation.
inline constexpr double kMadConsistency = 1.4826;

/// Median with the midpoint convention for even counts. Empty input throws.
double median(Vector values);

/// Projection statistics of the rows of `points` (one point per row).
///
/// Every direction runs from the coordinatewise median through one of the
/// points; each point's statistic is its largest robustly standardized
/// projection. Directions of zero length or zero MAD are skipped. Throws
/// NumericalError("degenerate point cloud") if no direction is usable.
Vector projection_statistics(const Matrix& points);

/// w_i = min(1, d^2 / PS_i^2); PS_i = 0 maps to 1.
Vector outlier_weights(const Vector& ps, double d);

double huber_rho(double r, double c);
double huber_psi(double r, double c);

/// 1.4826 * b_{m'} * median|r_i|.
double robust_scale(const Vector& residuals, int m_prime);

/// Small-sample correction of the MAD: tabulated for m' <= 9,
/// m' / (m' - 0.8) above.
double b_constant(int m_prime);

/// E[psi^2] / E[psi']^2 under the standard normal for the Huber psi.
double efficiency_correction(double c);

}  // namespace dse
