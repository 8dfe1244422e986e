#pragma once

#include <stdexcept>
#include <string>

namespace mate {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read/written, or its contents do not parse.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mate
