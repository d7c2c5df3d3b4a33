#pragma once

#include <stdexcept>
#include <string>

namespace abc {

// Argument outside the domain of a kernel or lookup (s > t, t >= t_L, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Rejected configuration: invalid schedule, bad grid, unknown key, missing file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, underflow, degenerate segments.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between a state vector and the configured state dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace abc
