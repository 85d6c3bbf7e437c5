#pragma once

#include <stdexcept>

namespace muoneq {

// Iterative kernel failed to converge or produced non-finite values.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside the mathematical domain of an operation (rank deficiency,
// zero matrix where a spectrum is required, violated inequality constraint).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller misuse: shape mismatch, bad step index, wrong schedule kind.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or unsupported file contents.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace muoneq
