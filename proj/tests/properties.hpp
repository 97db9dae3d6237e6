#pragma once

// Randomized property checks shared by the property test binary and the
// acceptance runner. Each check returns its worst observation.

#include <string>
#include <vector>

namespace props {

struct Result {
  std::string name;
  bool ok = false;
  std::string detail;
};

Result gradient_finite_differences();
Result entropy_convexity_and_monotonicity();
// The published form; fails for |beta| / (2 alpha^2) above about 2.99.
Result entropy_gap_lemma();
Result entropy_gap_lemma_valid_form();
Result lambert_lemma(long trials = 100'000);
Result asinh_sinh_round_trip();
Result depth_p_inverse_round_trip();
Result seed_determinism();

std::vector<Result> all();

}  // namespace props
