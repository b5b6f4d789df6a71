#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "tfqkd/channel.hpp"
#include "tfqkd/decoy.hpp"
#include "tfqkd/rng.hpp"

using namespace tfqkd;

namespace {

// Exact channel rates fed in as both bound directions (the infinite-data
// limit of the estimator inputs).
DecoyInputs exact_inputs(const SourceParams& s, const ArmTransmittance& arms,
                         const DeviceParams& dev) {
  using channel::pair_rate_phase_randomized;
  DecoyInputs in;
  auto both = [](double v) { return Bound{v, v}; };
  in.s_vac = both(pair_rate_phase_randomized(0.0, 0.0, arms, dev));
  in.s_a1_0 = both(pair_rate_phase_randomized(s.dec_a1, 0.0, arms, dev));
  in.s_a2_0 = both(pair_rate_phase_randomized(s.dec_a2, 0.0, arms, dev));
  in.s_0_b1 = both(pair_rate_phase_randomized(0.0, s.dec_b1, arms, dev));
  in.s_0_b2 = both(pair_rate_phase_randomized(0.0, s.dec_b2, arms, dev));
  auto sl = channel::slice_rates(s, arms, dev);
  in.t_delta = both(sl.t_delta);
  in.dec_a1 = s.dec_a1;
  in.dec_a2 = s.dec_a2;
  in.dec_b1 = s.dec_b1;
  in.dec_b2 = s.dec_b2;
  return in;
}

// Single-photon effective-event probability in this detector model: the
// photon clicks its detector and the other must stay dark, or the photon is
// lost and exactly one dark count fires.
double single_photon_yield(double eta, double d) {
  return eta * (1.0 - d) + (1.0 - eta) * 2.0 * d * (1.0 - d);
}

}  // namespace

TEST_CASE("s10 lower bound is positive and sound for the reference point") {
  DeviceParams dev;
  dev.dark_rate = 0.0;
  ArmTransmittance arms{0.05, 0.05};
  SourceParams s;
  s.dec_a1 = 0.1;
  s.dec_a2 = 0.3;
  s = bind_constrained_intensity(s);
  s.dec_b2 = 0.3;
  DecoyInputs in = exact_inputs(s, arms, dev);
  double bound = decoy::s10_lower(in);
  REQUIRE(bound > 0.0);
  REQUIRE(bound <= single_photon_yield(arms.eta_a, dev.dark_rate));
}

TEST_CASE("soundness: the one-sided bounds never exceed the true yield") {
  std::mt19937_64 rng = make_rng(17, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    DeviceParams dev;
    dev.dark_rate = std::pow(10.0, -2.0 - 8.0 * u(rng));
    dev.misalignment = 0.15 * u(rng);
    ArmTransmittance arms{0.01 + 0.49 * u(rng), 0.001 + 0.4 * u(rng)};
    SourceParams s;
    s.dec_a1 = 0.01 + 0.25 * u(rng);
    s.dec_a2 = s.dec_a1 * (1.5 + 4.0 * u(rng));
    s.dec_b1 = 0.01 + 0.25 * u(rng);
    s.dec_b2 = s.dec_b1 * (1.5 + 4.0 * u(rng));
    s.slice = 0.02 + 0.9 * u(rng);
    DecoyInputs in = exact_inputs(s, arms, dev);
    REQUIRE(decoy::s10_lower(in) <= single_photon_yield(arms.eta_a, dev.dark_rate));
    REQUIRE(decoy::s01_lower(in) <= single_photon_yield(arms.eta_b, dev.dark_rate));
  }
}

TEST_CASE("negative numerators clamp to zero") {
  DecoyInputs in;
  double s00 = 3e-4;
  in.s_vac = {s00, s00};
  in.s_a1_0 = {0.0, 0.0};  // low decoy observes nothing while vacuum clicks
  in.s_a2_0 = {s00, s00};
  in.s_0_b1 = {0.0, 0.0};
  in.s_0_b2 = {0.0, 0.0};
  in.dec_a1 = in.dec_b1 = 0.1;
  in.dec_a2 = in.dec_b2 = 0.3;
  REQUIRE(decoy::s10_lower(in) == 0.0);
  REQUIRE(decoy::s01_lower(in) == 0.0);  // Bob's rates zeroed with S_00 > 0
}

TEST_CASE("flat statistics stay consistent with a flat yield profile") {
  // If every setting counts at the same rate S, the rates are consistent with
  // all photon-number yields equal to S, and the estimator must not exceed S:
  //   numerator = S [mu2^2 (e^{mu1}-1) - mu1^2 (e^{mu2}-1)] > 0 for mu1 < mu2.
  DecoyInputs in;
  double s = 3e-4;
  in.s_vac = in.s_a1_0 = in.s_a2_0 = in.s_0_b1 = in.s_0_b2 = {s, s};
  in.dec_a1 = in.dec_b1 = 0.1;
  in.dec_a2 = in.dec_b2 = 0.3;
  double expected = s *
                    (0.09 * (std::exp(0.1) - 1.0) - 0.01 * (std::exp(0.3) - 1.0)) /
                    (0.1 * 0.3 * 0.2);
  REQUIRE(decoy::s10_lower(in) == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(decoy::s10_lower(in) > 0.0);
  REQUIRE(decoy::s10_lower(in) <= s);
}

TEST_CASE("degenerate intensities are rejected") {
  DecoyInputs in;
  in.dec_a1 = in.dec_a2 = 0.2;
  in.dec_b1 = 0.1;
  in.dec_b2 = 0.3;
  REQUIRE_THROWS_AS(decoy::s10_lower(in), DegenerateIntensities);
  in.dec_a1 = 0.0;
  in.dec_a2 = 0.2;
  REQUIRE_THROWS_AS(decoy::s10_lower(in), DegenerateIntensities);
}

TEST_CASE("symmetric inputs give identical one-sided bounds") {
  DeviceParams dev;
  dev.dark_rate = 1e-8;
  ArmTransmittance arms{0.2, 0.2};
  SourceParams s;
  DecoyInputs in = exact_inputs(s, arms, dev);
  REQUIRE(decoy::s10_lower(in) == Catch::Approx(decoy::s01_lower(in)).epsilon(1e-13));
}

TEST_CASE("s1z combines the sides by intensity weight") {
  REQUIRE(decoy::s1z_lower(0.037, 0.037, 0.2, 0.05) == Catch::Approx(0.037).epsilon(1e-15));
  REQUIRE(decoy::s1z_lower(0.02, 0.04, 0.1, 0.1) == Catch::Approx(0.03).epsilon(1e-15));
  REQUIRE(decoy::s1z_lower(0.04, 0.02, 0.1, 0.05) ==
          Catch::Approx((0.1 * 0.04 + 0.05 * 0.02) / 0.15).epsilon(1e-15));
  REQUIRE_THROWS_AS(decoy::s1z_lower(0.1, 0.1, 0.0, 0.0), DivisionByZero);
}

TEST_CASE("e1ph upper bound: vanishing numerator, clamping, and the worked value") {
  REQUIRE(decoy::e1ph_upper(std::exp(-0.15) * 2e-10 / 2.0, 2e-10, 0.03, 0.1, 0.05) ==
          Catch::Approx(0.0).margin(1e-18));
  REQUIRE(decoy::e1ph_upper(10.0, 0.0, 0.01, 0.1, 0.05) == 0.5);
  double expected = (1e-4 - std::exp(-0.15) * 2e-10 / 2.0) /
                    (std::exp(-0.15) * 0.15 * 0.03);
  REQUIRE(decoy::e1ph_upper(1e-4, 2e-10, 0.03, 0.1, 0.05) ==
          Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(expected == Catch::Approx(0.0258).margin(2e-4));
  REQUIRE_THROWS_AS(decoy::e1ph_upper(1e-4, 0.0, 0.0, 0.1, 0.05), ZeroYield);
}

TEST_CASE("monotonicity of the bounds in their inputs") {
  DeviceParams dev;
  dev.dark_rate = 1e-7;
  ArmTransmittance arms{0.3, 0.1};
  SourceParams s;
  DecoyInputs base = exact_inputs(s, arms, dev);

  double b0 = decoy::s10_lower(base);
  for (double bump : {1e-6, 1e-5, 1e-4}) {
    DecoyInputs up = base;
    up.s_a1_0.lower += bump;  // better low-decoy statistics raise the bound
    REQUIRE(decoy::s10_lower(up) >= b0);
    DecoyInputs worse = base;
    worse.s_a2_0.upper += bump;
    REQUIRE(decoy::s10_lower(worse) <= b0);
    worse = base;
    worse.s_vac.upper += bump;
    REQUIRE(decoy::s10_lower(worse) <= b0);
  }

  double e0 = decoy::e1ph_upper(1e-4, 1e-10, 0.03, s.dec_a1, s.dec_b1);
  REQUIRE(decoy::e1ph_upper(2e-4, 1e-10, 0.03, s.dec_a1, s.dec_b1) >= e0);
  REQUIRE(decoy::e1ph_upper(1e-4, 1e-10, 0.06, s.dec_a1, s.dec_b1) <= e0);
}

TEST_CASE("estimate() wires the pieces together") {
  DeviceParams dev;
  dev.dark_rate = 1e-9;
  ArmTransmittance arms{0.4, 0.02};
  SourceParams s;
  s.send_b = 0.6;
  s = bind_constrained_intensity(s);
  s.dec_b2 = std::max(s.dec_b2, 2.5 * s.dec_b1);
  DecoyInputs in = exact_inputs(s, arms, dev);
  EstimationResult est = decoy::estimate(in);
  REQUIRE(est.s1z_lower ==
          Catch::Approx(decoy::s1z_lower(est.s10_lower, est.s01_lower, s.dec_a1, s.dec_b1))
              .epsilon(1e-15));
  REQUIRE(est.e1ph_upper >= 0.0);
  REQUIRE(est.e1ph_upper <= 0.5);
}
