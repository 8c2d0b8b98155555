#pragma once

#include <stdexcept>
#include <string>

namespace crm {

// Base for every error raised by the library. Callers that only care about
// "something went wrong in crm" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid or missing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range input data (event logs, ids, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace crm
