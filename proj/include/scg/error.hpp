#pragma once

#include <stdexcept>
#include <string>

namespace scg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or sizes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated a precondition of the API.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Data produced by a different extractor, format version or network layout.
class IncompatibleError : public Error {
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

// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace scg
