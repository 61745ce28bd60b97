#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace catres {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented invariant. Maps to CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Mathematical precondition failed (zero vector, empty sample, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// File system failure. Maps to CLI exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace catres
