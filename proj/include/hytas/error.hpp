#pragma once

#include <stdexcept>
#include <string>

namespace hytas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch inside a tensor primitive or a network forward.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (non-scalar loss, wrong feature count, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace hytas
