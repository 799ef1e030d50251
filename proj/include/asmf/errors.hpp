#pragma once

#include <stdexcept>

namespace asmf {

// Numerical failure: eigensolver non-convergence, non-finite gradients, ...
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data: CSV/ASMX schema violations, broken batch pairing, ...
struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A study-level invariant failed (e.g. an empirical mean error exceeded its
// theoretical bound overlay).
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace asmf
