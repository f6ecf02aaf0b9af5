#pragma once

#include <stdexcept>
#include <string>

namespace defectgen {

// Base error. exit_code() maps onto the CLI contract:
//   2 = configuration/parameter error, 3 = data error, 4 = numeric failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

// Invalid parameter or configuration value.
class ParamError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// Missing or invalid input data.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// Dimension mismatch between operands or against a declared layout.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Corrupt or malformed file contents (bad magic, checksum, truncation).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite loss, solver non-convergence and similar numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace defectgen
