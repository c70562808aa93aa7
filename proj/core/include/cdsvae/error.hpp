#pragma once

#include <stdexcept>
#include <string>

namespace cdsvae {

// Base of every error the library throws. The CLI maps the concrete kind to
// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or vector extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced somewhere it must not be.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Object used in a state that does not allow the call (e.g. consumed tape).
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdsvae
