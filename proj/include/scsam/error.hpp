#pragma once

#include <stdexcept>
#include <string>

namespace scsam {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or command-line usage. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (missing masks, non-binary labels, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace scsam
