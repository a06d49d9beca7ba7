#pragma once

#include <stdexcept>
#include <string>

namespace divjudge {

/// Input data is malformed or insufficient (unreadable file, ragged CSV,
/// too few rows for the requested split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical operation failed (non-PD covariance, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divjudge
