#pragma once

#include <stdexcept>
#include <string>

namespace meco {

// Violated precondition / contract (caller bug).
class contract_error : public std::logic_error {
 public:
  explicit contract_error(const std::string& what) : std::logic_error(what) {}
};

// Bad runtime input (offending data, not a caller bug).
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Unrecognized or inconsistent configuration.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// A sampler chain left the finite domain; carries the step at which it happened.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Operation requested beyond the supported input dimensionality.
class unsupported_dimension_error : public std::runtime_error {
 public:
  explicit unsupported_dimension_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw contract_error(msg);
}

}  // namespace meco
