#pragma once

#include <stdexcept>
#include <string>

namespace diskflow {

// Caller passed arguments that violate an operation's contract.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid physical parameters or configuration values.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed experiment configuration: unknown key, wrong type or missing value.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// The rejection sampler could not place the disks.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two disks overlap beyond tolerance.
class StateCorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Conservation drift or another numerical breakdown.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An advance whose closed form divides by a vanishing relative velocity.
class IllConditionedError : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

// A neutral translation pushed the configuration into an overlap.
class PerturbationTooLargeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A collision too close to grazing for its linearization to be usable.
class TangentialFrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Analysis refused because the trajectory segment crosses a singularity.
class SingularSegmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diskflow
