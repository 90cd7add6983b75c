#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canopy {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed file content; carries the 1-based line number when known.
class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InvalidInput(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SpecError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class NotEligible : public Error {
 public:
  using Error::Error;
};

class DivergedDepth : public Error {
 public:
  using Error::Error;
};

class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

// An internal consistency check failed (maps to CLI exit code 3).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace canopy
