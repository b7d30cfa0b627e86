#pragma once

#include <stdexcept>
#include <string>

namespace fasam {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or out-of-contract data passed to an operation.
class InvalidInputError : public Error {
public:
  explicit InvalidInputError(const std::string& msg) : Error(msg) {}
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Dataset ingestion failure (missing files, size mismatches).
class IngestionError : public Error {
public:
  explicit IngestionError(const std::string& msg) : Error(msg) {}
};

/// Training produced a non-finite loss; carries the iteration index.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& msg, long iteration)
      : Error(msg + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

private:
  long iteration_;
};

/// Filesystem / serialization failure.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace fasam
