#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maskdet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated an operation's precondition (e.g. non-positive depth).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number (0 when unknown)
/// and the offending field name when one can be identified.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::string field = {});

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// A configuration value is unknown, malformed or out of range.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what);

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Tensor or checkpoint shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskdet
