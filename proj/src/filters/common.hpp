#pragma once

#include <vector>

#include "dse/filters.hpp"

namespace dse::detail {

/// Indices of the channels that take part in a correction.
std::vector<int> active_channels(const Observation& obs, int m, bool mask_invalid);

Vector select_rows(const Vector& v, const std::vector<int>& rows);
Matrix select_rows(const Matrix& a, const std::vector<int>& rows);
Matrix select_block(const Matrix& a, const std::vector<int>& rows);

/// Lower Cholesky factor of R restricted to `rows` (reuses the cached factor
/// when every channel is active).
Matrix measurement_factor(const NoiseModel& noise, const std::vector<int>& rows);

}  // namespace dse::detail
