#pragma once

#include <stdexcept>
#include <string>

namespace dln {

// Invalid dimensions, flags, or configuration values. The CLI maps it to exit code 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A quantity cannot be computed from the given inputs (missing ground truth,
// missing noise records, lemma preconditions not met).
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical solver failure (rank deficiency, infeasibility, non-convergence).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a function (e.g. the depth-p link h).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dln
