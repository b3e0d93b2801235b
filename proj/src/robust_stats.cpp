#include "dse/robust_stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "dse/error.hpp"

namespace dse {

void HuberConfig::validate() const {
  if (!(c > 0.0)) throw ConfigError("Huber breakpoint c must be positive");
  if (!(d > 0.0)) throw ConfigError("weight threshold d must be positive");
  if (!(irls_tol > 0.0)) throw ConfigError("IRLS tolerance must be positive");
  if (max_irls_iters < 1) throw ConfigError("IRLS iteration limit must be at least 1");
}

double median(Vector values) {
  const auto n = values.size();
  if (n == 0) throw ConfigError("median of an empty sample");
  double* first = values.data();
  double* mid = first + n / 2;
  std::nth_element(first, mid, first + n);
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(first, mid);
  return 0.5 * (lower + upper);
}

Vector projection_statistics(const Matrix& points) {
  const auto rows = points.rows();
  const auto cols = points.cols();
  if (rows < 3) throw ConfigError("projection statistics need at least 3 points");

  Eigen::RowVectorXd center(cols);
  for (Eigen::Index j = 0; j < cols; ++j) center[j] = median(points.col(j));
  const Matrix centered = points.rowwise() - center;

  Vector ps = Vector::Zero(rows);
  Vector proj(rows);
  Vector spread(rows);
  bool any_direction = false;
  for (Eigen::Index k = 0; k < rows; ++k) {
    const double len = centered.row(k).norm();
    if (!(len > 0.0)) continue;
    proj.noalias() = points * (centered.row(k).transpose() / len);
    const double loc = median(proj);
    spread = (proj.array() - loc).abs();
    const double mad = median(spread);
    const double scale = spread.maxCoeff();
    if (!(mad > 64.0 * std::numeric_limits<double>::epsilon() * scale)) continue;
    any_direction = true;
    ps = ps.cwiseMax(spread / (kMadConsistency * mad));
  }
  if (!any_direction) throw NumericalError("degenerate point cloud");
  return ps;
}

Vector outlier_weights(const Vector& ps, double d) {
  Vector w(ps.size());
  const double d2 = d * d;
  for (Eigen::Index i = 0; i < ps.size(); ++i) {
    const double p = ps[i];
    w[i] = (p <= d) ? 1.0 : d2 / (p * p);
  }
  return w;
}

double huber_rho(double r, double c) {
  const double a = std::abs(r);
  return a < c ? 0.5 * r * r : c * a - 0.5 * c * c;
}

double huber_psi(double r, double c) { return std::clamp(r, -c, c); }

double robust_scale(const Vector& residuals, int m_prime) {
  if (residuals.size() == 0) throw ConfigError("robust scale of an empty residual vector");
  return kMadConsistency * b_constant(m_prime) * median(residuals.cwiseAbs());
}

double b_constant(int m_prime) {
  static constexpr std::array<double, 8> kTable = {1.196, 1.495, 1.363, 1.206,
                                                   1.200, 1.140, 1.129, 1.107};
  if (m_prime < 2) throw ConfigError("sample too small");
  if (m_prime <= 9) return kTable[static_cast<std::size_t>(m_prime - 2)];
  return m_prime / (m_prime - 0.8);
}

double efficiency_correction(double c) {
  if (!(c > 0.0)) throw ConfigError("Huber breakpoint c must be positive");
  if (std::isinf(c)) return 1.0;
  const double z = c / std::numbers::sqrt2;
  const double inside = std::erf(z);                 // P(|r| < c)
  const double tail = 0.5 * std::erfc(z);            // P(r > c)
  const double pdf = std::exp(-0.5 * c * c) / std::sqrt(2.0 * std::numbers::pi);
  // E[psi^2] = E[r^2; |r| < c] + c^2 P(|r| >= c),  E[psi'] = P(|r| < c)
  const double second_moment = inside - 2.0 * c * pdf + 2.0 * c * c * tail;
  return second_moment / (inside * inside);
}

}  // namespace dse
