#pragma once

#include <stdexcept>
#include <string>

namespace brdro {

// Bad argument values: dimension mismatches, non-finite inputs, invalid fractions.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: calling an operation in a state where it is not allowed.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The finite-difference oracle could not evaluate its function.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A trainer hit a non-finite loss or gradient.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative inner solver failed to converge within its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace brdro
