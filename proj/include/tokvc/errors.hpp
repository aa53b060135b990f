#pragma once

#include <stdexcept>
#include <string>

namespace tokvc {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or shapes handed to an API call.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A filter specification that cannot be realised.
class InvalidDesign : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Malformed or truncated on-disk data (WAV, feature files, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A metric with no defined value for the given inputs.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during training or inference.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace tokvc
