#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wsens {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied inconsistent or out-of-range input (length mismatch,
// unknown column, empty treatment arm, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The input is well formed but the requested quantity does not exist
// numerically (collinearity, divergence, zero variance, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public NumericalError {
 public:
  RankDeficientError(const std::string& what, std::vector<std::size_t> columns)
      : NumericalError(what), columns_(std::move(columns)) {}

  // Indices (into the offending matrix) judged linearly dependent on the rest.
  const std::vector<std::size_t>& columns() const { return columns_; }

 private:
  std::vector<std::size_t> columns_;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace wsens
