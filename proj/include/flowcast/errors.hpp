#pragma once

#include <stdexcept>
#include <string>

namespace flowcast {

// Each error family maps onto one CLI exit code (see tools/flowcast.cpp).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind {
  io,
  bad_magic,
  truncated_header,
  bad_header,
  shape_mismatch,
  version_mismatch,
  manifest_inconsistent,
};

const char* to_string(FormatErrorKind kind);

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : DataError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowcast
