#pragma once

#include <stdexcept>
#include <string>

namespace vitca {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses map onto CLI exit codes in tools/.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents do not line up (matmul inner dims, non-divisible patch sizes, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (even window, sigma outside [0,1], ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated input files.
class DataError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace vitca
