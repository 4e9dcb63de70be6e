#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hda {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or settings that cannot work together (dimension mismatch, bad method name).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data values outside an operation's domain (label out of range, empty set).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. a backward pass fed a cache from a different network.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Carries every violated field of a configuration, not just the first.
class ValidationError : public ConfigError {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : ConfigError(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }

  std::vector<std::string> violations_;
};

}  // namespace hda
