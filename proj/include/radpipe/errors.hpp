#pragma once

#include <stdexcept>
#include <string>

namespace radpipe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A calibration document is structurally wrong: missing key or wrong type.
/// `path()` is a JSON pointer to the offending location.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inputs whose sizes disagree (mask vs. sensor, frame vs. matrix).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition was not met (triangle inequality, negative counts).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Image or mask bytes that cannot be decoded.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace radpipe
