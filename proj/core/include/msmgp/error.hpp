#pragma once

#include <stdexcept>
#include <string>

namespace msmgp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter violates the documented domain of an operation.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Input data (signals, spectra, rolls) is unusable for the request.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. The message names the offending chunk or field.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Run configuration is inconsistent (sample rate mismatch, unknown keys, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Linear algebra or optimisation broke down.
class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what, double condition_estimate = 0.0)
      : Error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace msmgp
