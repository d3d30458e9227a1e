#pragma once

#include <stdexcept>
#include <string>

namespace starwave {

/// Failure categories; the CLI maps them onto exit codes.
enum class ErrorKind { Config, Numeric, Hypothesis };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }
inline Error numeric_error(const std::string& what) { return {ErrorKind::Numeric, what}; }
inline Error hypothesis_error(const std::string& what) { return {ErrorKind::Hypothesis, what}; }

}  // namespace starwave
