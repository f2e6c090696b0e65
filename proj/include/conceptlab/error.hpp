#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace conceptlab {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed concept/template source. `position` is a byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at offset " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// An enumeration (contexts, hypotheses) grew past its configured cap.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data is inconsistent (bad CSV rows, misaligned records, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class GrammarError : public Error {
 public:
  using Error::Error;
};

}  // namespace conceptlab
