#include <algorithm>

#include "common.hpp"
#include "dse/filters.hpp"

namespace dse {

namespace detail {

std::vector<int> active_channels(const Observation& obs, int m, bool mask_invalid) {
  if (obs.z.size() != m) throw ConfigError("observation length does not match the model");
  if (!obs.valid.empty() && static_cast<int>(obs.valid.size()) != m) {
    throw ConfigError("validity mask length does not match the observation");
  }
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    if (!mask_invalid || obs.valid.empty() || obs.valid[static_cast<std::size_t>(i)]) {
      rows.push_back(i);
    }
  }
  if (rows.empty()) throw NumericalError("no valid measurement channels");
  return rows;
}

Vector select_rows(const Vector& v, const std::vector<int>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) == v.size()) return v;
  Vector out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

Matrix select_rows(const Matrix& a, const std::vector<int>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) == a.rows()) return a;
  Matrix out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.row(rows[i]);
  return out;
}

Matrix select_block(const Matrix& a, const std::vector<int>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) == a.rows()) return a;
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = a(rows[i], rows[j]);
  }
  return out;
}

Matrix measurement_factor(const NoiseModel& noise, const std::vector<int>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) == noise.R().rows()) return noise.R_factor();
  Eigen::LLT<Matrix> llt(select_block(noise.R(), rows));
  if (llt.info() != Eigen::Success) throw NumericalError("measurement covariance not PD");
  return llt.matrixL();
}

}  // namespace detail

NoiseModel::NoiseModel(Matrix process, Matrix measurement)
    : process_(std::move(process)), measurement_(std::move(measurement)) {
  if (process_.rows() != process_.cols() || measurement_.rows() != measurement_.cols()) {
    throw ConfigError("noise covariances must be square");
  }
  if (!process_.isApprox(process_.transpose()) || !measurement_.isApprox(measurement_.transpose())) {
    throw ConfigError("noise covariances must be symmetric");
  }
  Eigen::LLT<Matrix> w_llt(process_);
  if (w_llt.info() != Eigen::Success) throw ConfigError("process noise covariance W is not PD");
  Eigen::LLT<Matrix> r_llt(measurement_);
  if (r_llt.info() != Eigen::Success) throw ConfigError("measurement noise covariance R is not PD");
  measurement_factor_ = r_llt.matrixL();
  measurement_diagonal_ = measurement_.isDiagonal();
}

NoiseModel NoiseModel::diagonal(int n, double process_variance, int m, double measurement_variance) {
  return NoiseModel(Matrix::Identity(n, n) * process_variance,
                    Matrix::Identity(m, m) * measurement_variance);
}

bool Observation::all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](bool v) { return v; });
}

FilterState ekf_predict(const FilterState& fs, const NoiseModel& noise, const StateSpaceModel& model) {
  const int n = model.state_dim();
  if (fs.x_hat.size() != n || fs.sigma.rows() != n || noise.W().rows() != n) {
    throw ConfigError("state, covariance and process noise dimensions disagree");
  }
  const Matrix F = model.transition_jacobian(fs.x_hat);
  FilterState pred = fs;
  pred.x_hat = model.propagate(fs.x_hat);
  pred.sigma = symmetrized(F * fs.sigma * F.transpose() + noise.W());
  return pred;
}

FilterState ekf_correct(const FilterState& pred, const Observation& obs, const NoiseModel& noise,
                        const StateSpaceModel& model, bool mask_invalid) {
  const int m = model.measurement_dim();
  const auto rows = detail::active_channels(obs, m, mask_invalid);
  const Matrix H = detail::select_rows(model.measurement_jacobian(pred.x_hat), rows);
  const Vector innovation =
      detail::select_rows(model.innovation(obs.z, model.measure(pred.x_hat)), rows);

  const Matrix sigma_ht = pred.sigma * H.transpose();
  const Matrix s = symmetrized(H * sigma_ht + detail::select_block(noise.R(), rows));
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("gain computation failed");
  // K = Sigma H^T S^-1, formed as (S^-1 H Sigma)^T.
  const Matrix gain = llt.solve(sigma_ht.transpose()).transpose();

  FilterState out = pred;
  out.x_hat = pred.x_hat + gain * innovation;
  out.sigma = symmetrized(pred.sigma - gain * sigma_ht.transpose());
  return out;
}

StepOutcome ekf_step(const FilterState& fs, const Observation& obs, const NoiseModel& noise,
                     const StateSpaceModel& model, bool mask_invalid) {
  FilterState next = ekf_correct(ekf_predict(fs, noise, model), obs, noise, model, mask_invalid);
  next.k = fs.k + 1;
  return {std::move(next), {}};
}

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::Ekf:
      return "ekf";
    case FilterKind::GmEkf:
      return "gmekf";
    case FilterKind::Ukf:
      return "ukf";
  }
  return "?";
}

FilterKind parse_filter_kind(std::string_view name) {
  if (name == "ekf") return FilterKind::Ekf;
  if (name == "gmekf") return FilterKind::GmEkf;
  if (name == "ukf") return FilterKind::Ukf;
  throw ConfigError("unknown filter '" + std::string(name) + "' (expected ekf, gmekf or ukf)");
}

StepOutcome filter_step(FilterKind kind, const FilterState& fs, const Observation& obs,
                        const NoiseModel& noise, const StateSpaceModel& model,
                        const FilterSettings& settings) {
  switch (kind) {
    case FilterKind::Ekf:
      return ekf_step(fs, obs, noise, model, settings.mask_invalid);
    case FilterKind::GmEkf: {
      GmEkfConfig cfg = settings.gmekf;
      cfg.mask_invalid = settings.mask_invalid;
      return gmekf_step(fs, obs, noise, model, cfg);
    }
    case FilterKind::Ukf: {
      UkfConfig cfg = settings.ukf;
      cfg.mask_invalid = settings.mask_invalid;
      return ukf_step(fs, obs, noise, model, cfg);
    }
  }
  throw ConfigError("unknown filter kind");
}

}  // namespace dse
