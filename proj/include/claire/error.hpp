#pragma once

#include <stdexcept>
#include <string>

namespace claire {

// Every failure surfaced by the library derives from Error. The kind() tag is
// what the CLI writes into its machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error("shape_error", m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error("numeric_error", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error("validation_error", m) {}
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& m) : Error("fit_error", m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error("data_error", m) {}
};

}  // namespace claire
