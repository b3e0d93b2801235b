#include <cmath>

#include "common.hpp"
#include "dse/filters.hpp"

namespace dse {

namespace {

// Huber weight q = psi(r_S) / r_S with r_S = r / (s w), written without
// dividing by w so that vanishing leverage weights stay finite.
double huber_weight(double r, double s, double w, double c) {
  const double bound = c * s * w;
  const double a = std::abs(r);
  return a <= bound ? 1.0 : bound / a;
}

Vector weighted_solve(const Matrix& A, const Vector& y, const Vector& q) {
  const Matrix aq = A.transpose() * q.asDiagonal();
  Eigen::LLT<Matrix> llt(aq * A);
  if (llt.info() != Eigen::Success) throw NumericalError("rank deficient");
  Vector x = llt.solve(aq * y);
  if (!x.allFinite()) throw NumericalError("rank deficient");
  return x;
}

}  // namespace

BatchRegression gmekf_build_regression(const Observation& obs, const FilterState& pred,
                                       const StateSpaceModel& model, bool mask_invalid) {
  const int n = model.state_dim();
  const int m = model.measurement_dim();
  BatchRegression batch;
  batch.measurement_rows = detail::active_channels(obs, m, mask_invalid);
  const auto rows = static_cast<Eigen::Index>(batch.measurement_rows.size());

  batch.innovation = model.innovation(obs.z, model.measure(pred.x_hat));
  const Matrix H = detail::select_rows(model.measurement_jacobian(pred.x_hat), batch.measurement_rows);

  batch.z_tilde.resize(rows + n);
  batch.z_tilde.head(rows) =
      detail::select_rows(batch.innovation, batch.measurement_rows) + H * pred.x_hat;
  batch.z_tilde.tail(n) = pred.x_hat;
  batch.H_tilde.resize(rows + n, n);
  batch.H_tilde.topRows(rows) = H;
  batch.H_tilde.bottomRows(n).setIdentity();
  return batch;
}

RegressionForm gmekf_prewhiten(const BatchRegression& batch, const NoiseModel& noise,
                               const Matrix& pred_sigma) {
  const auto n = pred_sigma.rows();
  const auto rows = batch.z_tilde.size() - n;
  Eigen::LLT<Matrix> sigma_llt(pred_sigma);
  if (sigma_llt.info() != Eigen::Success) throw NumericalError("prediction covariance not PD");
  const Matrix r_factor = detail::measurement_factor(noise, batch.measurement_rows);

  // S = blockdiag(L_R, L_Sigma); apply S^-1 blockwise by triangular solves.
  RegressionForm reg;
  reg.m_prime = static_cast<int>(batch.z_tilde.size());
  reg.y.resize(reg.m_prime);
  reg.A.resize(reg.m_prime, n);
  if (noise.measurement_is_diagonal()) {
    const Vector inv_sd = r_factor.diagonal().cwiseInverse();
    reg.y.head(rows) = batch.z_tilde.head(rows).cwiseProduct(inv_sd);
    reg.A.topRows(rows) = inv_sd.asDiagonal() * batch.H_tilde.topRows(rows);
  } else {
    const auto lower = r_factor.triangularView<Eigen::Lower>();
    reg.y.head(rows) = lower.solve(batch.z_tilde.head(rows));
    reg.A.topRows(rows) = lower.solve(batch.H_tilde.topRows(rows));
  }
  const auto sigma_lower = sigma_llt.matrixL();
  reg.y.tail(n) = sigma_lower.solve(batch.z_tilde.tail(n));
  reg.A.bottomRows(n) = sigma_lower.solve(batch.H_tilde.bottomRows(n));
  reg.w = Vector::Ones(reg.m_prime);
  return reg;
}

Vector leverage_column(const Vector& innovation, const Vector& x_pred, const StateSpaceModel& model) {
  const Vector coords = model.leverage_coordinates(x_pred);
  Vector col(innovation.size() + coords.size());
  col << innovation, coords;
  return col;
}

Matrix leverage_matrix(const Vector& previous, const Vector& current) {
  if (previous.size() != 0 && previous.size() != current.size()) {
    throw ConfigError("leverage history has the wrong length");
  }
  Matrix z(current.size(), 2);
  z.col(0) = previous.size() == 0 ? current : previous;
  z.col(1) = current;
  return z;
}

RobustWeights gmekf_weights(const Vector& previous, const Vector& current, double d) {
  RobustWeights out;
  out.ps = projection_statistics(leverage_matrix(previous, current));
  out.w = outlier_weights(out.ps, d);
  return out;
}

double gm_objective(const RegressionForm& reg, const Vector& x, double s, double c) {
  const Vector r = reg.y - reg.A * x;
  double j = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double w = reg.w[i];
    const double a = std::abs(r[i]);
    // w^2 rho(r / (s w)), expanded per branch of the Huber function.
    if (a < c * s * w) {
      j += 0.5 * (a / s) * (a / s);
    } else {
      j += c * w * a / s - 0.5 * c * c * w * w;
    }
  }
  return j;
}

IrlsResult gmekf_irls(const RegressionForm& reg, const HuberConfig& cfg, const Vector& x0,
                      bool recompute_scale) {
  cfg.validate();
  if (reg.A.rows() != reg.y.size() || reg.w.size() != reg.y.size() || reg.A.cols() != x0.size()) {
    throw ConfigError("regression dimensions disagree");
  }
  IrlsResult result;
  result.x = x0;
  double s = robust_scale(reg.y - reg.A * x0, reg.m_prime);
  Vector q(reg.y.size());
  for (int iter = 0; iter < cfg.max_irls_iters; ++iter) {
    const Vector r = reg.y - reg.A * result.x;
    if (recompute_scale && iter > 0) s = robust_scale(r, reg.m_prime);
    result.scale = s;
    if (!(s > 0.0)) {
      // Exact fit: nothing to reweight.
      result.x = weighted_solve(reg.A, reg.y, Vector::Ones(reg.y.size()));
      result.iterations = iter + 1;
      result.converged = true;
      return result;
    }
    for (Eigen::Index i = 0; i < r.size(); ++i) q[i] = huber_weight(r[i], s, reg.w[i], cfg.c);
    Vector next = weighted_solve(reg.A, reg.y, q);
    result.objective.push_back({gm_objective(reg, result.x, s, cfg.c), gm_objective(reg, next, s, cfg.c)});
    const double change = (next - result.x).lpNorm<Eigen::Infinity>();
    result.x = std::move(next);
    result.iterations = iter + 1;
    if (change <= cfg.irls_tol) {
      result.converged = true;
      return result;
    }
  }
  throw IrlsNotConverged(std::move(result));
}

Matrix gmekf_update_covariance(const RegressionForm& reg, const HuberConfig& cfg) {
  Eigen::LLT<Matrix> llt(reg.A.transpose() * reg.A);
  if (llt.info() != Eigen::Success) throw NumericalError("rank deficient");
  const Matrix weighted = reg.A.transpose() * reg.w.cwiseAbs2().asDiagonal() * reg.A;
  const Matrix inner = llt.solve(weighted);                       // (A^T A)^-1 (A^T Qw A)
  const Matrix sandwich = llt.solve(inner.transpose()).transpose();  // ... (A^T A)^-1
  return symmetrized(efficiency_correction(cfg.c) * sandwich);
}

StepOutcome gmekf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                       const StateSpaceModel& model, const GmEkfConfig& cfg) {
  cfg.huber.validate();
  const FilterState pred = ekf_predict(fs, noise, model);

  // step 1: batch-mode regression
  const BatchRegression batch = gmekf_build_regression(obs, pred, model, cfg.mask_invalid);

  // step 2: projection statistics and leverage weights
  const Vector column = leverage_column(batch.innovation, pred.x_hat, model);
  const auto n = model.state_dim();
  std::vector<int> z_rows = batch.measurement_rows;
  for (int i = 0; i < n; ++i) z_rows.push_back(model.measurement_dim() + i);
  StepOutcome out;
  Vector weights = Vector::Ones(static_cast<Eigen::Index>(z_rows.size()));
  if (!cfg.force_unit_weights) {
    const Vector prev = fs.leverage_history.size() == 0
                            ? Vector()
                            : detail::select_rows(fs.leverage_history, z_rows);
    try {
      weights = gmekf_weights(prev, detail::select_rows(column, z_rows), cfg.huber.d).w;
    } catch (const NumericalError&) {
      out.diagnostics.leverage_degenerate = true;
    }
  }

  // step 3: prewhitening
  RegressionForm reg = gmekf_prewhiten(batch, noise, pred.sigma);
  reg.w = weights;

  // step 4: IRLS from the prediction
  IrlsResult irls;
  try {
    irls = gmekf_irls(reg, cfg.huber, pred.x_hat, cfg.recompute_scale);
  } catch (const IrlsNotConverged& e) {
    irls = e.last_iterate();
  }
  reg.s = irls.scale;

  // step 5: covariance
  out.state.x_hat = irls.x;
  out.state.sigma = gmekf_update_covariance(reg, cfg.huber);
  out.state.k = fs.k + 1;
  out.state.leverage_history = column;
  out.diagnostics.irls_iterations = irls.iterations;
  out.diagnostics.irls_converged = irls.converged;
  out.diagnostics.weights = std::move(weights);
  out.diagnostics.objective = std::move(irls.objective);
  return out;
}

}  // namespace dse
