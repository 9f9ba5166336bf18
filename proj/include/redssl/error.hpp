#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace redssl {

// Base of every error raised by the library. Subclasses let callers (the CLI
// in particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}

  // 1-based line of the offending input, 0 when not line-oriented.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace redssl
