#pragma once

#include <stdexcept>
#include <string>

namespace etm {

// Every library failure derives from Error so callers can catch one type; the
// CLI maps the concrete kinds onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IoError : public Error {
public:
  using Error::Error;
};

class SamplingError : public Error {
public:
  using Error::Error;
};

class MiningError : public Error {
public:
  using Error::Error;
};

class ConsistencyError : public Error {
public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
public:
  using Error::Error;
};

}  // namespace etm
