#pragma once

#include <stdexcept>
#include <string>

namespace lcn4 {

// Shape or axis mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration (unknown key, bad flag combination).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Object used in a state that does not allow the operation.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Not enough classes or instances to draw the requested episode.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset tree, splits file or image could not be read.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or value during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lcn4
