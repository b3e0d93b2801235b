#include "common.hpp"
#include "dse/filters.hpp"

namespace dse {

namespace {

struct SigmaWeights {
  double lambda = 0.0;
  Vector mean;
  Vector cov;
};

SigmaWeights sigma_weights(int n, const UkfConfig& cfg) {
  SigmaWeights sw;
  sw.lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  const double spread = n + sw.lambda;
  sw.mean = Vector::Constant(2 * n + 1, 0.5 / spread);
  sw.cov = sw.mean;
  sw.mean[0] = sw.lambda / spread;
  sw.cov[0] = sw.mean[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  return sw;
}

// Weighted mean of sigma-point images, taken relative to the centre image so
// the large negative centre weight does not cancel catastrophically.
Vector weighted_mean(const Matrix& images, const Vector& weights) {
  const Vector centre = images.col(0);
  return centre + (images.rightCols(images.cols() - 1).colwise() - centre) * weights.tail(weights.size() - 1);
}

// Columns x, x + L_i, x - L_i with L L^T = (n + lambda) P.
Matrix sigma_points(const Vector& x, const Matrix& p, double spread) {
  Eigen::LLT<Matrix> llt(spread * p);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not PD");
  const Matrix l = llt.matrixL();
  const auto n = x.size();
  Matrix pts(n, 2 * n + 1);
  pts.col(0) = x;
  pts.middleCols(1, n) = l.colwise() + x;
  pts.rightCols(n) = (-l).colwise() + x;
  return pts;
}

}  // namespace

StepOutcome ukf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                     const StateSpaceModel& model, const UkfConfig& cfg) {
  const int n = model.state_dim();
  if (fs.x_hat.size() != n || fs.sigma.rows() != n) throw ConfigError("state dimension mismatch");
  const SigmaWeights sw = sigma_weights(n, cfg);
  const double spread = n + sw.lambda;
  const int count = 2 * n + 1;

  // Predict.
  const Matrix chi = sigma_points(fs.x_hat, fs.sigma, spread);
  Matrix propagated(n, count);
  for (int i = 0; i < count; ++i) propagated.col(i) = model.propagate(chi.col(i));
  const Vector x_pred = weighted_mean(propagated, sw.mean);
  const Matrix dx_pred = propagated.colwise() - x_pred;
  const Matrix p_pred =
      symmetrized(dx_pred * sw.cov.asDiagonal() * dx_pred.transpose() + noise.W());

  // Update, with sigma points redrawn around the prediction.
  const auto rows = detail::active_channels(obs, model.measurement_dim(), cfg.mask_invalid);
  const auto m = static_cast<Eigen::Index>(rows.size());
  const Matrix chi_pred = sigma_points(x_pred, p_pred, spread);
  Matrix measured(m, count);
  for (int i = 0; i < count; ++i) {
    measured.col(i) = detail::select_rows(model.measure(chi_pred.col(i)), rows);
  }
  const Vector z_pred = weighted_mean(measured, sw.mean);
  Matrix dz(m, count);
  for (int i = 0; i < count; ++i) dz.col(i) = measured.col(i) - z_pred;
  const Matrix dx = chi_pred.colwise() - x_pred;

  const Matrix p_zz =
      symmetrized(dz * sw.cov.asDiagonal() * dz.transpose() + detail::select_block(noise.R(), rows));
  const Matrix p_xz = dx * sw.cov.asDiagonal() * dz.transpose();
  Eigen::LLT<Matrix> llt(p_zz);
  if (llt.info() != Eigen::Success) throw NumericalError("gain computation failed");
  const Matrix gain = llt.solve(p_xz.transpose()).transpose();

  // Innovation against the sigma-point mean, wrapped like the model's channels.
  Vector full_pred = obs.z;
  for (Eigen::Index i = 0; i < m; ++i) full_pred[rows[static_cast<std::size_t>(i)]] = z_pred[i];
  const Vector innovation = detail::select_rows(model.innovation(obs.z, full_pred), rows);

  StepOutcome out;
  out.state.x_hat = x_pred + gain * innovation;
  // K P_zz K^T = K P_xz^T, the cheaper form.
  out.state.sigma = symmetrized(p_pred - gain * p_xz.transpose());
  out.state.k = fs.k + 1;
  return out;
}

}  // namespace dse
