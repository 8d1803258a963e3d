#pragma once

#include <stdexcept>
#include <string>

namespace slabuq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Vector length or requested dimension does not match what is available.
class DimensionError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Eigensolver failure, singular system, non-finite result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace slabuq
