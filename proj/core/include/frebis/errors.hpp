#pragma once

#include <stdexcept>
#include <string>

namespace frebis {

// Shapes of operands do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value became NaN/Inf, or an input was outside an operation's domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// User supplied configuration or data failed validation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable, or malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatVersionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace frebis
