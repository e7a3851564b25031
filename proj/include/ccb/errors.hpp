#pragma once

#include <stdexcept>
#include <string>

namespace ccb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input violates a documented invariant (shape, range, finiteness).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The input is well-formed but the computation is undefined for it,
/// e.g. a single-class label vector.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, version or layout in a trace file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checksum mismatch in a trace file.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (missing path, unwritable directory, short write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ccb
