#pragma once

#include <algorithm>
#include <cmath>

#include "tfqkd/errors.hpp"

namespace tfqkd {

// A two-sided bound on an expected value.
struct Bound {
  double lower = 0;
  double upper = 0;
};

// Everything the four-intensity estimators consume: expected-value bounds of
// the vacuum/one-sided counting rates and of the slice error rate, plus the
// decoy intensities themselves.
struct DecoyInputs {
  Bound s_vac;     // <S_00>
  Bound s_a1_0;    // <S_{mu_A1, 0}>
  Bound s_a2_0;    // <S_{mu_A2, 0}>
  Bound s_0_b1;    // <S_{0, mu_B1}>
  Bound s_0_b2;    // <S_{0, mu_B2}>
  Bound t_delta;   // <T_Delta>
  double dec_a1 = 0, dec_a2 = 0, dec_b1 = 0, dec_b2 = 0;
};

struct EstimationResult {
  double s10_lower = 0;   // single photon from Alice's side
  double s01_lower = 0;   // single photon from Bob's side
  double s1z_lower = 0;   // <s_1^Z> lower bound
  double e1ph_upper = 0;  // <e_1^ph> upper bound
};

namespace decoy {

namespace detail {

// Lower bound on the single-photon counting rate from one side's decoy pair:
//   [mu2^2 e^{mu1} S^L_{mu1} - mu1^2 e^{mu2} S^U_{mu2} - (mu2^2 - mu1^2) S^U_00]
//   / [mu1 mu2 (mu2 - mu1)],
// clamped at 0. Bound directions pick the worst case per coefficient sign.
inline double one_side_lower(double mu1, double mu2, double s1_lower, double s2_upper,
                             double s00_upper) {
  if (mu1 <= 0.0 || mu2 == mu1)
    throw DegenerateIntensities(
        "single-photon bound needs 0 < mu1 < mu2 with distinct intensities");
  double num = mu2 * mu2 * std::exp(mu1) * s1_lower - mu1 * mu1 * std::exp(mu2) * s2_upper -
               (mu2 * mu2 - mu1 * mu1) * s00_upper;
  double den = mu1 * mu2 * (mu2 - mu1);
  return std::max(0.0, num / den);
}

}  // namespace detail

inline double s10_lower(const DecoyInputs& in) {
  return detail::one_side_lower(in.dec_a1, in.dec_a2, in.s_a1_0.lower, in.s_a2_0.upper,
                                in.s_vac.upper);
}

inline double s01_lower(const DecoyInputs& in) {
  return detail::one_side_lower(in.dec_b1, in.dec_b2, in.s_0_b1.lower, in.s_0_b2.upper,
                                in.s_vac.upper);
}

// Intensity-weighted mean of the two one-sided bounds.
inline double s1z_lower(double s10, double s01, double dec_a1, double dec_b1) {
  double sum = dec_a1 + dec_b1;
  if (sum <= 0.0) throw DivisionByZero("s1z_lower needs dec_a1 + dec_b1 > 0");
  return (dec_a1 * s10 + dec_b1 * s01) / sum;
}

// Upper bound on the expected single-photon phase-flip error rate,
//   [T^U_Delta - e^{-(mu_A1+mu_B1)} S^L_00 / 2]
//   / [e^{-(mu_A1+mu_B1)} (mu_A1+mu_B1) s1z_lower],
// clamped into [0, 1/2].
inline double e1ph_upper(double t_delta_upper, double s00_lower, double s1z_lower,
                         double dec_a1, double dec_b1) {
  if (s1z_lower <= 0.0)
    throw ZeroYield("e1ph_upper undefined: single-photon yield bound is zero");
  double mu = dec_a1 + dec_b1;
  double att = std::exp(-mu);
  double val = (t_delta_upper - att * s00_lower / 2.0) / (att * mu * s1z_lower);
  return std::clamp(val, 0.0, 0.5);
}

inline EstimationResult estimate(const DecoyInputs& in) {
  EstimationResult r;
  r.s10_lower = s10_lower(in);
  r.s01_lower = s01_lower(in);
  r.s1z_lower = s1z_lower(r.s10_lower, r.s01_lower, in.dec_a1, in.dec_b1);
  if (r.s1z_lower > 0.0)
    r.e1ph_upper = e1ph_upper(in.t_delta.upper, in.s_vac.lower, r.s1z_lower, in.dec_a1,
                              in.dec_b1);
  else
    r.e1ph_upper = 0.5;
  return r;
}

}  // namespace decoy
}  // namespace tfqkd
