#pragma once

#include <stdexcept>
#include <string>

namespace hvae {

/// Bad input: malformed files, invalid arguments, schema violations.
/// The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (non-finite loss, failed normalization).
/// The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPathError : public InputError {
 public:
  using InputError::InputError;
};

class IncompleteWeightsError : public InputError {
 public:
  using InputError::InputError;
};

class DomainError : public InputError {
 public:
  using InputError::InputError;
};

class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

class MissingLabelsError : public InputError {
 public:
  using InputError::InputError;
};

class CorruptFileError : public InputError {
 public:
  using InputError::InputError;
};

class VersionMismatchError : public InputError {
 public:
  using InputError::InputError;
};

class RenormalizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace hvae
