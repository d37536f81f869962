#pragma once

#include <stdexcept>
#include <string>

namespace hierdp {

// Bad argument values, mismatched shapes, violated preconditions.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or contradictory input files; message names the file and line.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  IngestionError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

// Invalid experiment configuration (unknown names, impossible combinations).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Regression could not be fit (too few points, degenerate predictor).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hierdp
