#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rigcn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is malformed (non-finite coordinates, zero-area mesh, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// An argument violates an operation's precondition (M > N, empty interval, ...).
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// A neighborhood is too small to define a local reference frame.
class DegeneratePatchError : public Error {
 public:
  using Error::Error;
};

/// Matrix dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Loss or gradient became non-finite.
class TrainingDivergenceError : public Error {
 public:
  using Error::Error;
};

/// Model or experiment configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Text file could not be parsed; carries the offending line number (1-based).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rigcn
