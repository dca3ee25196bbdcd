#pragma once

#include <stdexcept>
#include <string>

namespace milfd {

// Every failure surfaced by the library carries a short machine-parsable
// category so the CLI can print "error: <category>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error("input", m) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& m) : Error("usage", m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error("data", m) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& m) : Error("undefined-metric", m) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& m) : Error("divergence", m) {}
};

}  // namespace milfd
