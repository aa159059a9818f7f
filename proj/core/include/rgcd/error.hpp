#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rgcd {

// Base of every error raised by the library. `category()` is a short
// machine-parseable tag used by the CLI's single-line error output.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* category() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "domain"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "format"; }
};

// Carries every violated constraint found while validating a config.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }
  const char* category() const noexcept override { return "config"; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace rgcd
