#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coup {

// Argument outside the mathematical domain of an operation (time outside
// [0,1], dimension mismatch, non-finite input).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A solver produced a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(std::size_t step, const std::string& what)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Recorded trajectory cannot be replayed by the adjoint.
class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coup
