#pragma once
#include <stdexcept>
#include <string>

namespace mmq {

// Invalid user-supplied configuration (bad hyperparameter, unknown key, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tensor or vector dimensions do not line up.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf reached a place it must never reach; the run aborts with a diagnostic.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmq
