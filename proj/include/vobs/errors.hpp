#pragma once

#include <stdexcept>
#include <string>

namespace vobs {

// Base for every failure raised by the library. The CLI maps the concrete
// subclasses onto process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad preconditions, malformed input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Divergence, non-finite intermediate values, singular matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Filesystem and file-format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

class WeightVersionError : public IoError {
 public:
  using IoError::IoError;
};

class WeightShapeError : public IoError {
 public:
  using IoError::IoError;
};

class WeightCorruptionError : public IoError {
 public:
  using IoError::IoError;
};

inline int exit_code(const Error& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  return 1;
}

}  // namespace vobs
