#pragma once

#include <stdexcept>
#include <string>

namespace bgerase {

/// Error families map onto distinct process exit codes in the CLI.
enum class ErrorFamily : int {
  internal = 1,
  config = 2,
  io = 3,
  numeric = 4,
  input = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& what)
      : std::runtime_error(what), family_(family) {}

  ErrorFamily family() const noexcept { return family_; }
  int exit_code() const noexcept { return static_cast<int>(family_); }

 private:
  ErrorFamily family_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorFamily::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorFamily::io, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorFamily::numeric, what) {}
};

/// Precondition violations on data: shapes, ranges, missing donors.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorFamily::input, what) {}
};

}  // namespace bgerase
