#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dse/error.hpp"
#include "dse/linalg.hpp"
#include "dse/robust_stats.hpp"
#include "dse/state_space.hpp"

namespace dse {

/// Estimate, error covariance and time index shared by all three filters.
struct FilterState {
  Vector x_hat;
  Matrix sigma;
  int k = 0;
  /// GM-EKF only: previous column of the leverage matrix
  /// [innovation; leverage coordinates of the prediction]. Empty until the
  /// first GM-EKF correction.
  Vector leverage_history;
};

/// Additive process (W) and measurement (R) noise covariances.
class NoiseModel {
 public:
  NoiseModel(Matrix process, Matrix measurement);
  static NoiseModel diagonal(int n, double process_variance, int m, double measurement_variance);

  const Matrix& W() const { return process_; }
  const Matrix& R() const { return measurement_; }
  /// Lower Cholesky factor of R.
  const Matrix& R_factor() const { return measurement_factor_; }
  bool measurement_is_diagonal() const { return measurement_diagonal_; }

 private:
  Matrix process_;
  Matrix measurement_;
  Matrix measurement_factor_;
  bool measurement_diagonal_ = false;
};

/// One stacked measurement vector with its channel validity flags.
struct Observation {
  Vector z;
  std::vector<bool> valid;  ///< empty means every channel is valid

  bool all_valid() const;
};

/// J before and after one IRLS update, both at that iteration's scale.
struct ObjectiveStep {
  double before = 0.0;
  double after = 0.0;
};

struct StepDiagnostics {
  int irls_iterations = 0;
  bool irls_converged = true;
  Vector weights;  ///< GM-EKF leverage weights of this step
  /// GM-EKF: the leverage cloud had no usable projection direction (more than
  /// half the points coincide), so unit weights were used.
  bool leverage_degenerate = false;
  std::vector<ObjectiveStep> objective;  ///< GM-EKF IRLS objective trace
};

struct StepOutcome {
  FilterState state;
  StepDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// Extended Kalman filter

/// x <- f(x), Sigma <- F Sigma F^T + W.
FilterState ekf_predict(const FilterState& fs, const NoiseModel& noise, const StateSpaceModel& model);

/// Kalman gain correction. With `mask_invalid` the flagged channels are
/// dropped; otherwise they are used at face value.
FilterState ekf_correct(const FilterState& pred, const Observation& obs, const NoiseModel& noise,
                        const StateSpaceModel& model, bool mask_invalid = false);

StepOutcome ekf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                     const StateSpaceModel& model, bool mask_invalid = false);

// ---------------------------------------------------------------------------
// GM-EKF

/// Measurements and prediction stacked as one linear regression
/// z_tilde = H_tilde x + e, with the quantities it was built from.
struct BatchRegression {
  Vector z_tilde;      ///< [z - g(x_pred) + H x_pred; x_pred]
  Matrix H_tilde;      ///< [H; I]
  Vector innovation;   ///< z - g(x_pred)
  std::vector<int> measurement_rows;  ///< channels kept in the top block
};

BatchRegression gmekf_build_regression(const Observation& obs, const FilterState& pred,
                                       const StateSpaceModel& model, bool mask_invalid = false);

/// Prewhitened regression y = A x + xi, with leverage weights and scale.
struct RegressionForm {
  Vector y;
  Matrix A;
  Vector w;      ///< leverage weights, one per row
  double s = 0;  ///< robust scale of the final IRLS residuals
  int m_prime = 0;
};

/// Whitens the batch regression with the Cholesky factor of
/// blockdiag(R, Sigma_pred). Weights are initialised to one.
RegressionForm gmekf_prewhiten(const BatchRegression& batch, const NoiseModel& noise,
                               const Matrix& pred_sigma);

/// One column of the leverage matrix: [innovation; leverage coordinates of x_pred].
Vector leverage_column(const Vector& innovation, const Vector& x_pred, const StateSpaceModel& model);

/// Two-column leverage matrix [previous, current]; an empty previous column
/// is replaced by the current one.
Matrix leverage_matrix(const Vector& previous, const Vector& current);

/// Projection statistics of the leverage matrix mapped through the weight function.
RobustWeights gmekf_weights(const Vector& previous, const Vector& current, double d);

/// GM objective sum_i w_i^2 rho(r_i / (s w_i)) at x for a fixed scale s.
double gm_objective(const RegressionForm& reg, const Vector& x, double s, double c);

struct IrlsResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  double scale = 0.0;
  std::vector<ObjectiveStep> objective;
};

class IrlsNotConverged : public NumericalError {
 public:
  explicit IrlsNotConverged(IrlsResult last)
      : NumericalError("IRLS did not converge"), last_(std::move(last)) {}
  const IrlsResult& last_iterate() const { return last_; }

 private:
  IrlsResult last_;
};

/// Iteratively reweighted least squares for the Huber GM-estimator, started
/// at x0. With `recompute_scale` the robust scale follows the residuals of
/// each iterate; otherwise it is fixed at its value for x0.
/// Throws IrlsNotConverged after cfg.max_irls_iters updates.
IrlsResult gmekf_irls(const RegressionForm& reg, const HuberConfig& cfg, const Vector& x0,
                      bool recompute_scale = true);

/// Sigma = kappa(c) (A^T A)^-1 (A^T diag(w^2) A) (A^T A)^-1.
Matrix gmekf_update_covariance(const RegressionForm& reg, const HuberConfig& cfg);

struct GmEkfConfig {
  HuberConfig huber;
  bool recompute_scale = true;
  /// Skip projection statistics and use unit leverage weights.
  bool force_unit_weights = false;
  bool mask_invalid = false;
};

/// Predict, build regression, weights, prewhiten, IRLS, covariance update.
/// IRLS non-convergence keeps the last iterate and clears
/// diagnostics.irls_converged. A degenerate leverage cloud falls back to
/// unit weights and sets diagnostics.leverage_degenerate.
StepOutcome gmekf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                       const StateSpaceModel& model, const GmEkfConfig& cfg);

// ---------------------------------------------------------------------------
// Unscented Kalman filter (additive noise, symmetric 2n+1 sigma points)

struct UkfConfig {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
  bool mask_invalid = false;
};

StepOutcome ukf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                     const StateSpaceModel& model, const UkfConfig& cfg);

// ---------------------------------------------------------------------------

enum class FilterKind { Ekf, GmEkf, Ukf };

std::string_view to_string(FilterKind kind);
/// Accepts "ekf", "gmekf", "ukf".
FilterKind parse_filter_kind(std::string_view name);

struct FilterSettings {
  GmEkfConfig gmekf;
  UkfConfig ukf;
  bool mask_invalid = false;
};

StepOutcome filter_step(FilterKind kind, const FilterState& fs, const Observation& obs,
                        const NoiseModel& noise, const StateSpaceModel& model,
                        const FilterSettings& settings);

}  // namespace dse
