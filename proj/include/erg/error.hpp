#pragma once

#include <stdexcept>
#include <string>

namespace erg {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-side contract was violated (bad argument, inconsistent sizes).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Problem configuration could not be parsed or is invalid.
class ConfigError : public Error {
 public:
  ConfigError(int line, std::string key, const std::string& message)
      : Error(format(line, key, message)), line_(line), key_(std::move(key)) {}

  [[nodiscard]] int line() const noexcept { return line_; }
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  static std::string format(int line, const std::string& key, const std::string& message) {
    std::string out = "config error";
    if (line > 0) out += " at line " + std::to_string(line);
    if (!key.empty()) out += " (key '" + key + "')";
    return out + ": " + message;
  }

  int line_;
  std::string key_;
};

/// The finite-difference stencil is not monotone on the requested grid.
class MonotonicityError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Explicit time step exceeds the monotonicity bound.
class CflError : public PreconditionError {
 public:
  CflError(const std::string& message, double max_dt) : PreconditionError(message), max_dt_(max_dt) {}
  [[nodiscard]] double max_dt() const noexcept { return max_dt_; }

 private:
  double max_dt_;
};

/// Monte Carlo batch produced too many non-finite paths.
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace erg
