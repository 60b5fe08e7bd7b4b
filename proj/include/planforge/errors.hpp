#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace planforge {

/// Value outside the domain of a numeric operation (e.g. quantizing 1.5).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Elements violate the ordering contract of the token codec.
class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed serialized input. `position` is the offending index, or -1.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long position = -1)
      : std::runtime_error(what), position_(position) {}
  long position() const noexcept { return position_; }

 private:
  long position_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long position = -1)
      : std::runtime_error(what), position_(position) {}
  long position() const noexcept { return position_; }

 private:
  long position_;
};

struct FieldError {
  std::string field;
  std::string message;
};

/// Input failed validation; carries one entry per offending field.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<FieldError> errors)
      : std::runtime_error(summarize(errors)), errors_(std::move(errors)) {}
  ValidationError(std::string field, std::string message)
      : ValidationError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}

  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  static std::string summarize(const std::vector<FieldError>& errors) {
    std::string out = "validation failed";
    for (const auto& e : errors) out += "; " + e.field + ": " + e.message;
    return out;
  }
  std::vector<FieldError> errors_;
};

}  // namespace planforge
