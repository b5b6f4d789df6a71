#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "tfqkd/config.hpp"
#include "tfqkd/errors.hpp"

namespace tfqkd {

// Total transmittance of each arm, detector efficiency and any extra
// attenuation included.
struct ArmTransmittance {
  double eta_a = 0.0;
  double eta_b = 0.0;
};

// Expected counting/error rates for every source-setting pair, plus the
// expected number of windows each setting occupies.
struct ExpectedRates {
  double s_vac = 0;    // S_00
  double s_a1_0 = 0;   // S_{mu_A1, 0}
  double s_a2_0 = 0;   // S_{mu_A2, 0}
  double s_0_b1 = 0;   // S_{0, mu_B1}
  double s_0_b2 = 0;   // S_{0, mu_B2}
  double s_z = 0;      // S_Z
  double e_z = 0;      // E_Z
  double t_delta = 0;  // error counting rate in the accepted slice
  double s_delta = 0;  // counting rate in the accepted slice (diagnostic)

  double n_vac = 0;
  double n_a1_0 = 0;
  double n_a2_0 = 0;
  double n_0_b1 = 0;
  double n_0_b2 = 0;
  double n_delta = 0;  // slice-accepted (1,1) windows
  double n_z = 0;      // N_t pz_a pz_b

  // Full partition of the N_t windows over setting pairs; keys "a|b" with
  // a,b in {z,x0,x1,x2}, plus the derived "delta" subset of "x1|x1".
  std::map<std::string, double> window_counts;
};

namespace channel {

// eta_d * 10^(-alpha L / 10) * extra_loss
inline double transmittance(double length_km, const DeviceParams& device,
                            double extra_loss = 1.0) {
  return device.detector_eff * std::pow(10.0, -device.attenuation * length_km / 10.0) *
         extra_loss;
}

inline ArmTransmittance arms_for(const ValidatedConfig& cfg) {
  return {transmittance(cfg.channel().len_a, cfg.device(), cfg.channel().extra_loss_a),
          transmittance(cfg.channel().len_b, cfg.device(), cfg.channel().extra_loss_b)};
}

namespace detail {

// Adaptive Simpson to a relative tolerance; integrands here are smooth and
// strictly positive, so the relative criterion is safe.
template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                   double whole, double rel_tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * rel_tol * std::abs(left + right))
    return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, rel_tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, rel_tol, depth - 1);
}

template <class F>
double integrate(const F& f, double a, double b, double rel_tol = 1e-10) {
  if (a == b) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol, 48);
}

// I0(c) - 1 without the cancellation that the direct subtraction suffers at
// small arguments: sum_{k>=1} (c^2/4)^k / (k!)^2.
inline double i0_minus_1(double c) {
  if (c > 3.0) return std::cyl_bessel_i(0.0, c) - 1.0;
  double q = 0.25 * c * c;
  double term = q;  // k = 1
  double sum = 0.0;
  for (int k = 1; k < 64; ++k) {
    sum += term;
    if (term <= 1e-18 * sum) break;
    term *= q / double((k + 1) * (k + 1));
  }
  return sum;
}

}  // namespace detail

// Expected effective-event probability for a phase-randomized coherent pair
// with intensities int_a, int_b arriving through the two arms:
//   2(1-d) e^{-(x+y)/2} I0(sqrt(xy)) - 2(1-d)^2 e^{-(x+y)},
// x = eta_a int_a, y = eta_b int_b. Factored through I0-1 and expm1 so the
// vacuum value is 2d(1-d) to the last bit instead of drowning in cancellation.
inline double pair_rate_phase_randomized(double int_a, double int_b,
                                         const ArmTransmittance& arms,
                                         const DeviceParams& device) {
  double x = arms.eta_a * int_a;
  double y = arms.eta_b * int_b;
  double d = device.dark_rate;
  double s = 0.5 * (x + y);
  double es = std::exp(-s);
  double bracket = detail::i0_minus_1(std::sqrt(x * y)) - std::expm1(-s) + d * es;
  return 2.0 * (1.0 - d) * es * bracket;
}

struct SliceRates {
  double t_delta = 0;
  double s_delta = 0;
};

// Mean error/effective probabilities over the accepted phase slice
// { theta : 1 - |cos theta| <= lambda } for the (mu_A1, mu_B1) decoy pair.
// The accepted set has a 4-fold symmetry, so averaging theta over
// [0, arccos(1 - lambda)] with the left detector as the "right" one covers it.
inline SliceRates slice_rates(const SourceParams& source, const ArmTransmittance& arms,
                              const DeviceParams& device) {
  double lambda = source.slice;
  if (lambda <= 0.0) throw EmptySlice("slice width lambda must be > 0");
  double theta_m = std::acos(1.0 - lambda);

  double x = arms.eta_a * source.dec_a1;
  double y = arms.eta_b * source.dec_b1;
  double c = std::sqrt(x * y);
  double d = device.dark_rate;
  double ed = device.misalignment;
  double s = 0.5 * (x + y);
  double es = std::exp(-s);

  // Means of expm1(-+ c cos theta) over the accepted arc; both are
  // sign-definite there, so the relative quadrature criterion holds.
  double mean_minus =
      detail::integrate([c](double t) { return std::expm1(-c * std::cos(t)); }, 0.0,
                        theta_m) /
      theta_m;
  double mean_plus =
      detail::integrate([c](double t) { return std::expm1(c * std::cos(t)); }, 0.0,
                        theta_m) /
      theta_m;

  double base = d * es - std::expm1(-s);  // = 1 - (1-d)e^{-s}, click prob at intensity s
  SliceRates r;
  r.s_delta = (1.0 - d) * es * (mean_plus + mean_minus + 2.0 * base);
  r.t_delta = (1.0 - d) * es * ((1.0 - ed) * mean_minus + ed * mean_plus + base);
  return r;
}

struct ZRates {
  double s_z = 0;
  double e_z = 0;
};

// Z-window counting rate and bit-flip error fraction. Both-send and
// neither-send effective events carry opposite bit values, so they are the
// error contributions.
inline ZRates z_window_rates(const SourceParams& source, const ArmTransmittance& arms,
                             const DeviceParams& device) {
  double ea = source.send_a, eb = source.send_b;
  double s_both = pair_rate_phase_randomized(source.sig_a, source.sig_b, arms, device);
  double s_a = pair_rate_phase_randomized(source.sig_a, 0.0, arms, device);
  double s_b = pair_rate_phase_randomized(0.0, source.sig_b, arms, device);
  double s_00 = pair_rate_phase_randomized(0.0, 0.0, arms, device);

  ZRates r;
  r.s_z = ea * eb * s_both + ea * (1.0 - eb) * s_a + (1.0 - ea) * eb * s_b +
          (1.0 - ea) * (1.0 - eb) * s_00;
  if (r.s_z == 0.0) throw ZeroRate("S_Z = 0: Z-window error fraction undefined");
  r.e_z = (ea * eb * s_both + (1.0 - ea) * (1.0 - eb) * s_00) / r.s_z;
  return r;
}

// Fraction of the phase circle accepted by the slice criterion.
inline double slice_fraction(double lambda) {
  return 2.0 * std::acos(1.0 - lambda) / std::acos(-1.0);
}

inline ExpectedRates expected_rates(const ValidatedConfig& cfg) {
  const SourceParams& s = cfg.source();
  const DeviceParams& dev = cfg.device();
  ArmTransmittance arms = arms_for(cfg);

  ExpectedRates r;
  r.s_vac = pair_rate_phase_randomized(0.0, 0.0, arms, dev);
  r.s_a1_0 = pair_rate_phase_randomized(s.dec_a1, 0.0, arms, dev);
  r.s_a2_0 = pair_rate_phase_randomized(s.dec_a2, 0.0, arms, dev);
  r.s_0_b1 = pair_rate_phase_randomized(0.0, s.dec_b1, arms, dev);
  r.s_0_b2 = pair_rate_phase_randomized(0.0, s.dec_b2, arms, dev);

  ZRates z = z_window_rates(s, arms, dev);
  r.s_z = z.s_z;
  r.e_z = z.e_z;

  SliceRates sl = slice_rates(s, arms, dev);
  r.t_delta = sl.t_delta;
  r.s_delta = sl.s_delta;

  double nt = dev.total_windows;
  double pa[4] = {s.pz_a, s.px_a0, s.px_a1, s.px_a2};
  double pb[4] = {s.pz_b, s.px_b0, s.px_b1, s.px_b2};
  static const char* label[4] = {"z", "x0", "x1", "x2"};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      r.window_counts[std::string(label[i]) + "|" + label[j]] = nt * pa[i] * pb[j];

  r.n_vac = nt * s.px_a0 * s.px_b0;
  r.n_a1_0 = nt * s.px_a1 * s.px_b0;
  r.n_a2_0 = nt * s.px_a2 * s.px_b0;
  r.n_0_b1 = nt * s.px_a0 * s.px_b1;
  r.n_0_b2 = nt * s.px_a0 * s.px_b2;
  r.n_z = nt * s.pz_a * s.pz_b;
  r.n_delta = nt * s.px_a1 * s.px_b1 * slice_fraction(s.slice);
  r.window_counts["delta"] = r.n_delta;
  return r;
}

}  // namespace channel
}  // namespace tfqkd
