#pragma once

#include <stdexcept>
#include <string>

namespace gmmnqmc {

/// Bad input: malformed config, out-of-range parameter, shape mismatch.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function (quantile of 0, negative dof, ...).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// The requested method does not exist for this model (no conditional
/// distribution method, unsupported dimension, ...).
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A persisted file does not match the expected schema or version.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Computation failed at run time (I/O, retry caps).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gmmnqmc
