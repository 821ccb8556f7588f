#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sburgers {

/// Argument outside the mathematical domain of an operation (negative time, negative exponent, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mismatched truncation levels or grid sizes.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Invalid configuration; `key` names the offending entry when there is one.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Non-finite state produced by a time step.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::size_t step, double time)
      : std::runtime_error("non-finite state after step " + std::to_string(step) + " (t = " +
                           std::to_string(time) + ")"),
        step_(step),
        time_(time) {}

  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t step_;
  double time_;
};

}  // namespace sburgers
