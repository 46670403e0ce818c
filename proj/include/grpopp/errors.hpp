#pragma once

#include <stdexcept>
#include <string>

namespace grpopp {

// Bad arguments to an in-process call (out-of-vocabulary token, shape mismatch, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Hyperparameter or experiment-file problems. Maps to CLI exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reward-spec or checkpoint files that fail to parse or validate.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite gradient or parameter during training. Maps to CLI exit status 2.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, std::string diagnostic_json)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic_json)) {}

  const std::string& diagnostic() const noexcept { return diagnostic_; }

 private:
  std::string diagnostic_;
};

}  // namespace grpopp
