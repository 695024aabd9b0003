#pragma once

#include <stdexcept>
#include <string>

namespace chronoscope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: odd grid counts, mismatched grids, bad weights.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A numerical precondition failed: truncation, Nyquist, singular division.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Raised for qudit combs whose peaks overlap; callers may opt out.
class OverlapWarning : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace chronoscope
