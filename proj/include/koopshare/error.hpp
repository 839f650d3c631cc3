#pragma once

#include <stdexcept>
#include <string>

namespace koopshare {

// Base of every error the library raises. The CLI maps subclasses of
// DataError to exit code 2 and UsageError to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite or out-of-domain numeric input.
class InvalidInput : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

class SingularSystem : public DataError {
 public:
  using DataError::DataError;
};

class NotStabilizable : public DataError {
 public:
  NotStabilizable(const std::string& what, double last_residual)
      : DataError(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

class CostSpecError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateData : public DataError {
 public:
  using DataError::DataError;
};

class NotApplicable : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace koopshare
