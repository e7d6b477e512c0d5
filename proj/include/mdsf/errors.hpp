#pragma once

#include <stdexcept>
#include <string>

namespace mdsf {

/// Operand shapes are incompatible for the requested operation.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A configuration value (axis, dilation, kernel size, level, ...) is invalid.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An input value lies outside the mathematical domain of the operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// An API was called in a state it does not support (e.g. backward on a non-scalar).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A training quantity became NaN or infinite.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mdsf
