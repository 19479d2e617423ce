#pragma once

#include <stdexcept>
#include <string>

namespace pixelstack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value outside its documented domain (index out of range, bad bit count...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff engine (non-scalar loss, detached graph).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `kind()` distinguishes bad magic, truncation, ...
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, invariant_violation, io };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid run configuration (unknown key, unparsable value...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pixelstack
