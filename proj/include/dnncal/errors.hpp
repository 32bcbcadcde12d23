#pragma once

#include <stdexcept>
#include <string>

namespace dnncal {

// Error classes map one-to-one onto CLI exit codes.
enum class ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode code() const = 0;
};

/// Bad invocation or configuration (unknown flag, missing argument, bad value).
class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kUsage; }
};

/// Malformed or inconsistent input data (ragged CSV rows, shape mismatch).
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kData; }
};

/// Numerical failure (divergence, matrix not positive definite).
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::kNumeric; }
};

}  // namespace dnncal
