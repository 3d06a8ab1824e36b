#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtlfno {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or specification values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// LU pivot (or singular value) fell below the singularity threshold.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::size_t slice, const std::string& what)
      : Error(what), slice_(slice) {}

  std::size_t slice() const noexcept { return slice_; }

 private:
  std::size_t slice_;
};

/// A non-finite value appeared during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Failure while reading a persisted dataset or checkpoint.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public LoadError {
 public:
  using LoadError::LoadError;
};

class VersionError : public LoadError {
 public:
  using LoadError::LoadError;
};

class TruncatedFileError : public LoadError {
 public:
  using LoadError::LoadError;
};

}  // namespace mtlfno
