#pragma once

#include <stdexcept>
#include <string>

namespace gmq {

// Base of every error the library raises. The CLI maps NumericError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shape mismatch, empty input, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, divergence, or a failed numeric self-check.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bag sampling cannot satisfy the requested composition.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmq
