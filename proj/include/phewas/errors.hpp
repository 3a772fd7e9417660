#pragma once

#include <stdexcept>
#include <string>

namespace phewas {

// Invalid arguments, bad configuration, contract violations. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that make a statistic undefined (too few points, zero variance).
class DegenerateInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed files or unknown column/id references.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Duplicate keys on insert.
class ConflictError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// I/O and remote-endpoint failures. CLI exit code 2.
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what, int attempts = 1)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

}  // namespace phewas
