#pragma once

#include <stdexcept>
#include <string>

namespace morphopt {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries "path:line: what".
class ParseError : public Error {
 public:
  using Error::Error;
  ParseError(const std::string& path, int line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what) {}
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Solver breakdown, non-convergence, or invalid numerical state.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace morphopt
