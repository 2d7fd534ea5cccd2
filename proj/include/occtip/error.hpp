#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace occtip {

enum class ErrorKind {
  InvalidMesh,
  DegenerateMesh,
  InvalidConfig,
  EmptyCloud,
  InvalidInput,
  ShapeError,
  NumericalError,
  FormatError,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every recoverable failure in the library. The kind
/// is what callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the container reader. `offset()` is the byte position at which
/// the input stopped making sense.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& message);

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Raised when a non-finite value appears inside a numeric kernel.
class NumericalError : public Error {
 public:
  NumericalError(std::string where, long step, const std::string& message);

  const std::string& where() const noexcept { return where_; }
  long step() const noexcept { return step_; }

 private:
  std::string where_;
  long step_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace occtip
