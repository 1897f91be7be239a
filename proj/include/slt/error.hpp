#pragma once

#include <stdexcept>
#include <string>

namespace slt {

// Bad inputs: malformed configs, infeasible targets, shape mismatches.
// Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown: NaN gradients, failed gradient checks.
// Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace slt
