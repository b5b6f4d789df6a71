#pragma once

#include <cmath>
#include <limits>

#include "tfqkd/channel.hpp"
#include "tfqkd/config.hpp"
#include "tfqkd/decoy.hpp"
#include "tfqkd/errors.hpp"

namespace tfqkd {

// Failure probability of one observed<->expected estimate (xi/2 per tail).
struct TailSetting {
  double failure_prob = 1e-10;
};

namespace chernoff {

namespace detail {

inline double ln_two_over_xi(const TailSetting& s) {
  if (!(s.failure_prob > 0.0 && s.failure_prob < 1.0))
    throw DomainError("failure probability must lie in (0,1)");
  return std::log(2.0) - std::log(s.failure_prob);
}

// Solves g(v) = target for an increasing g on (0, inf): geometric bracket
// expansion, then bisection to relative width 1e-12. Returns +inf when g
// stays below target up to the cap (the defining equation has no root in
// the representable range; callers map that to the conservative boundary).
template <class G>
inline double solve_increasing(const G& g, double target, double cap, const char* what) {
  double hi = 1.0;
  int guard = 0;
  while (g(hi) < target) {
    hi *= 2.0;
    if (hi > cap) return std::numeric_limits<double>::infinity();
    if (++guard > 64) throw NonConvergence(what);
  }
  double lo = hi > 1.0 ? 0.5 * hi : 0.0;
  int iters = 0;
  while (hi - lo > 1e-12 * hi) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < target ? lo : hi) = mid;
    if (++iters > 500) throw NonConvergence(what);
  }
  return 0.5 * (lo + hi);
}

// The four defining equations, written in substituted variables that stay
// accurate for tiny solutions and never overflow:
//   t = ln(1+delta)  for the (1+delta) family,
//   v = -ln(1-delta) for the (1-delta) family.

// X [ln(1+d1) - d1/(1+d1)] = L   ->   X [t + expm1(-t)] = L
inline double solve_t1(double x, double big_l) {
  auto g = [x](double t) { return x * (t + std::expm1(-t)); };
  return solve_increasing(g, big_l, 746.0, "chernoff delta1");
}

// X [d2/(1-d2) + ln(1-d2)] = L   ->   X [expm1(v) - v] = L
inline double solve_v2(double x, double big_l) {
  auto g = [x](double v) { return x * (std::expm1(v) - v); };
  return solve_increasing(g, big_l, 746.0, "chernoff delta2");
}

// phi [(1+d1')ln(1+d1') - d1'] = L   ->   phi [t e^t - expm1(t)] = L
inline double solve_t1_prime(double phi, double big_l) {
  auto g = [phi](double t) {
    return phi * (t <= 1.0 ? t * std::exp(t) - std::expm1(t)
                           : std::exp(t) * (t - 1.0) + 1.0);
  };
  return solve_increasing(g, big_l, 746.0, "chernoff delta1'");
}

// phi [d2' + (1-d2')ln(1-d2')] = L   ->   phi [-expm1(-v) - v e^{-v}] = L;
// the left side is bounded by phi, so for phi <= L there is no root and the
// lower bound collapses to zero.
inline double solve_v2_prime(double phi, double big_l) {
  auto g = [phi](double v) { return phi * (-std::expm1(-v) - v * std::exp(-v)); };
  if (phi <= big_l) return std::numeric_limits<double>::infinity();
  return solve_increasing(g, big_l, 746.0, "chernoff delta2'");
}

}  // namespace detail

inline double delta1(double observed, const TailSetting& s) {
  if (observed < 0) throw DomainError("observed count must be >= 0");
  return std::expm1(detail::solve_t1(observed, detail::ln_two_over_xi(s)));
}

inline double delta2(double observed, const TailSetting& s) {
  if (observed < 0) throw DomainError("observed count must be >= 0");
  return -std::expm1(-detail::solve_v2(observed, detail::ln_two_over_xi(s)));
}

inline double delta1_prime(double expected, const TailSetting& s) {
  if (expected < 0) throw DomainError("expected value must be >= 0");
  return std::expm1(detail::solve_t1_prime(expected, detail::ln_two_over_xi(s)));
}

inline double delta2_prime(double expected, const TailSetting& s) {
  if (expected < 0) throw DomainError("expected value must be >= 0");
  return -std::expm1(-detail::solve_v2_prime(expected, detail::ln_two_over_xi(s)));
}

// Lower bound on the expected value from an observed count:
// phi^L(X) = X / (1 + delta1(X)); 0 at X = 0.
inline double expected_lower(double observed, const TailSetting& s) {
  if (observed < 0) throw DomainError("observed count must be >= 0");
  if (observed == 0) return 0.0;
  double t = detail::solve_t1(observed, detail::ln_two_over_xi(s));
  if (std::isinf(t)) return 0.0;  // delta1 beyond representable: bound underflows
  return observed * std::exp(-t);
}

// Upper bound on the expected value from an observed count:
// phi^U(X) = X / (1 - delta2(X)); the X = 0 limit is ln(2/xi).
inline double expected_upper(double observed, const TailSetting& s) {
  if (observed < 0) throw DomainError("observed count must be >= 0");
  double big_l = detail::ln_two_over_xi(s);
  if (observed == 0) return big_l;
  double v = detail::solve_v2(observed, big_l);
  if (std::isinf(v)) return big_l;
  return observed * std::exp(v);
}

// Upper bound on the realized count from an expected value:
// X^U(phi) = (1 + delta1'(phi)) phi; the phi = 0 limit is ln(2/xi).
inline double real_upper(double expected, const TailSetting& s) {
  if (expected < 0) throw DomainError("expected value must be >= 0");
  double big_l = detail::ln_two_over_xi(s);
  if (expected == 0) return big_l;
  double t = detail::solve_t1_prime(expected, big_l);
  if (std::isinf(t)) return big_l;
  return expected * std::exp(t);
}

// Lower bound on the realized count from an expected value:
// X^L(phi) = (1 - delta2'(phi)) phi; 0 when the defining equation has no root.
inline double real_lower(double expected, const TailSetting& s) {
  if (expected < 0) throw DomainError("expected value must be >= 0");
  if (expected == 0) return 0.0;
  double v = detail::solve_v2_prime(expected, detail::ln_two_over_xi(s));
  if (std::isinf(v)) return 0.0;
  return expected * std::exp(-v);
}

// Converts the analytic (or observed) rates into expected-value bounds:
// observed count X = N * S per setting (counts stay un-rounded), then
// N <S>^L = phi^L(X) and N <S>^U = phi^U(X).
inline DecoyInputs apply_to_rates(const ExpectedRates& rates, const SourceParams& source,
                                  const TailSetting& setting) {
  auto bound_of = [&](double rate, double windows, const char* label) {
    if (!(windows > 0))
      throw DomainError(std::string("window count for ") + label + " must be > 0");
    double x = windows * rate;
    return Bound{expected_lower(x, setting) / windows, expected_upper(x, setting) / windows};
  };
  DecoyInputs in;
  in.s_vac = bound_of(rates.s_vac, rates.n_vac, "S_00");
  in.s_a1_0 = bound_of(rates.s_a1_0, rates.n_a1_0, "S_{mu_A1,0}");
  in.s_a2_0 = bound_of(rates.s_a2_0, rates.n_a2_0, "S_{mu_A2,0}");
  in.s_0_b1 = bound_of(rates.s_0_b1, rates.n_0_b1, "S_{0,mu_B1}");
  in.s_0_b2 = bound_of(rates.s_0_b2, rates.n_0_b2, "S_{0,mu_B2}");
  in.t_delta = bound_of(rates.t_delta, rates.n_delta, "T_Delta");
  in.dec_a1 = source.dec_a1;
  in.dec_a2 = source.dec_a2;
  in.dec_b1 = source.dec_b1;
  in.dec_b2 = source.dec_b2;
  return in;
}

struct FinalCounts {
  double n1 = 0;     // realized effective single-photon count, lower bound
  double e1ph = 0;   // realized phase-flip error fraction, upper bound
};

// N_1^Z = N_t p_A^Z p_B^Z [eps_A(1-eps_B) mu'_A e^{-mu'_A}
//                          + eps_B(1-eps_A) mu'_B e^{-mu'_B}];
// n1 = X^L(N_1^Z <s_1^Z>^L), e1ph = X^U(N_1^Z <s_1^Z>^L <e_1^ph>^U) / (N_1^Z <s_1^Z>^L).
inline FinalCounts finalize_counts(double s1z_lower_expected, double e1ph_upper_expected,
                                   const ValidatedConfig& cfg) {
  const SourceParams& s = cfg.source();
  const DeviceParams& dev = cfg.device();
  double bracket = s.send_a * (1.0 - s.send_b) * s.sig_a * std::exp(-s.sig_a) +
                   s.send_b * (1.0 - s.send_a) * s.sig_b * std::exp(-s.sig_b);
  double n1z = dev.total_windows * s.pz_a * s.pz_b * bracket;
  double mean = n1z * s1z_lower_expected;
  if (mean <= 0.0)
    throw ZeroYield("finalize_counts needs N_1^Z <s_1^Z>^L > 0");
  TailSetting setting{dev.failure_prob};
  FinalCounts out;
  out.n1 = real_lower(mean, setting);
  out.e1ph = real_upper(mean * e1ph_upper_expected, setting) / mean;
  return out;
}

}  // namespace chernoff
}  // namespace tfqkd
