#pragma once

#include <stdexcept>
#include <string>

namespace styleid {

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument (timestep, ratio, bound) lies outside its valid domain.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Timesteps passed in the wrong order to a sampler step.
class OrderingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration: unknown layer ids, resolution mismatches, bad files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A gradient was requested for a value that was never recorded on the tape.
class MissingGradientError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A histogram that should sum to one does not.
class NormalizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Broken internal invariant, e.g. an attention cache miss for a scheduled step.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace styleid
