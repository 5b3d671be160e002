#pragma once

#include <stdexcept>
#include <string>

namespace recall {

// Caller broke a documented precondition (shape mismatch, id out of range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A configuration is structurally invalid (odd head dim, bad layer count, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced a non-finite value. The message names the primitive.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A generator could not satisfy its output constraints.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace recall
