#pragma once

#include <stdexcept>
#include <string>

namespace dse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, inconsistent dimensions, invalid parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical stage failed (singular solve, non-PD covariance, divergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dse
