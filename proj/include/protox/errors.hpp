#pragma once

#include <stdexcept>
#include <string>

namespace protox {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto its documented exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API was called outside its contract (empty input, non-scalar loss, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent hyperparameters or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A binary file is malformed: bad magic, version, truncation or hash.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a data invariant (NaN, empty class, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values met during training or gradient checking.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The dataset cannot satisfy the requested episode shape.
class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace protox
