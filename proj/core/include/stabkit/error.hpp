#pragma once

#include <stdexcept>
#include <string>

namespace stabkit {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON/CSV). The message names the offending field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid input that violates a type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// MILP encoding could not be built (e.g. missing bounds).
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// The LP solver lost numerical control; never reported as a status.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace stabkit
