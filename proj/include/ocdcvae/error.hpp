#pragma once

#include <stdexcept>
#include <string>

namespace ocdcvae {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked in the wrong state (backward without a trace,
// missing class center, phase ordering).
class StateError : public Error {
 public:
  using Error::Error;
};

// A scalar knob is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk file (datasets, checkpoints, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

// The data does not satisfy an operation's precondition.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocdcvae
