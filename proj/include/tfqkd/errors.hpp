#pragma once

#include <stdexcept>
#include <string>

namespace tfqkd {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An input violates a documented type invariant; the message names it.
struct ConstraintViolation : Error {
  using Error::Error;
};

// Original/Modified runs require Alice's and Bob's source parameters to match.
struct AsymmetricParamsForSymmetricVariant : Error {
  using Error::Error;
};

struct DivisionByZero : Error {
  using Error::Error;
};

// Decoy pair with equal (or zero) intensities; the estimator denominators vanish.
struct DegenerateIntensities : Error {
  using Error::Error;
};

// Phase post-selection slice has zero width.
struct EmptySlice : Error {
  using Error::Error;
};

// A conditional rate (e.g. E_Z) is undefined because its denominator rate is zero.
struct ZeroRate : Error {
  using Error::Error;
};

// Single-photon yield bound is zero, so the phase-error fraction is undefined.
struct ZeroYield : Error {
  using Error::Error;
};

// A tail-bound root finder failed to bracket or converge.
struct NonConvergence : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

// Benchmark bound diverges at unit transmittance.
struct InfiniteBound : Error {
  using Error::Error;
};

// Malformed configuration text (unknown key, bad number, missing file).
struct ParseError : Error {
  using Error::Error;
};

}  // namespace tfqkd
