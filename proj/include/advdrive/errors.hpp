#pragma once

#include <stdexcept>
#include <string>

namespace advdrive {

// Base for all library errors. `kind()` is a stable, machine-parseable class
// name that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& m) : Error("contract_violation", m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error("numeric_error", m) {}
};

class FreezeViolation : public Error {
 public:
  explicit FreezeViolation(const std::string& m) : Error("freeze_violation", m) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& m, std::string last_good)
      : Error("divergence", m), last_good_checkpoint_(std::move(last_good)) {}
  const std::string& last_good_checkpoint() const { return last_good_checkpoint_; }

 private:
  std::string last_good_checkpoint_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};

}  // namespace advdrive
