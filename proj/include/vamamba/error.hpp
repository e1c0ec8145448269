#pragma once

#include <stdexcept>
#include <string>

namespace vamamba {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes or layouts passed to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced at an op boundary, or an invalid numeric argument.
class NumericError : public Error {
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

}  // namespace vamamba
