#pragma once

#include <stdexcept>
#include <string>

namespace ssde {

enum class ErrorKind {
  invalid_input,
  format,
  config,
  allocation,
  contract,
  runtime,
};

/// Base exception for the library. The kind maps to a CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_input(const std::string& what) {
  return Error(ErrorKind::invalid_input, what);
}
inline Error format_error(const std::string& what) {
  return Error(ErrorKind::format, what);
}
inline Error config_error(const std::string& what) {
  return Error(ErrorKind::config, what);
}
inline Error allocation_error(const std::string& what) {
  return Error(ErrorKind::allocation, what);
}
inline Error contract_violation(const std::string& what) {
  return Error(ErrorKind::contract, what);
}
inline Error runtime_error(const std::string& what) {
  return Error(ErrorKind::runtime, what);
}

/// Process exit code for an error category.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::invalid_input: return 2;
    case ErrorKind::format: return 3;
    case ErrorKind::allocation: return 4;
    case ErrorKind::contract: return 5;
    case ErrorKind::runtime: return 6;
  }
  return 1;
}

}  // namespace ssde
