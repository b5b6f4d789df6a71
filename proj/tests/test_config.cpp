#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "tfqkd/channel.hpp"
#include "tfqkd/config.hpp"
#include "tfqkd/rng.hpp"

using namespace tfqkd;

namespace {

SourceParams symmetric_source() {
  SourceParams s;  // defaults are symmetric and normalized
  return s;
}

// Random valid general-variant source: draw the free parameters, derive
// dec_b1 from the constraint, normalize the window probabilities.
SourceParams random_source(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SourceParams s;
  s.sig_a = 0.05 + 0.9 * u(rng);
  s.sig_b = 0.05 + 0.9 * u(rng);
  s.send_a = 0.05 + 0.9 * u(rng);
  s.send_b = 0.05 + 0.9 * u(rng);
  s.dec_a1 = 0.01 + 0.2 * u(rng);
  s.dec_a2 = s.dec_a1 * (2.0 + 3.0 * u(rng));
  s.dec_b2 = 0.5 + 0.5 * u(rng);
  double w[4] = {1.0 + u(rng), 0.2 + u(rng), 0.2 + u(rng), 0.1 + u(rng)};
  double sum = w[0] + w[1] + w[2] + w[3];
  s.pz_a = w[0] / sum;
  s.px_a0 = w[1] / sum;
  s.px_a1 = w[2] / sum;
  s.px_a2 = 1.0 - s.pz_a - s.px_a0 - s.px_a1;
  s.pz_b = s.pz_a;
  s.px_b0 = s.px_a0;
  s.px_b1 = s.px_a1;
  s.px_b2 = s.px_a2;
  s.slice = 0.01 + 0.98 * u(rng);
  s = bind_constrained_intensity(s);
  if (s.dec_b1 >= s.dec_b2) s.dec_b2 = 2.0 * s.dec_b1;
  return s;
}

}  // namespace

TEST_CASE("symmetric inputs satisfy the source constraint with equal decoys") {
  SourceParams s = symmetric_source();
  REQUIRE_NOTHROW(validate(DeviceParams{}, ChannelPair{}, s, Variant::general));
  // the constraint ratio is exactly 1 for a fully symmetric source
  REQUIRE(eq_ratio_rhs(s) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("constraint violation is rejected") {
  SourceParams s = symmetric_source();
  s.sig_a = 0.5;
  s.sig_b = 0.4;
  s.send_a = 0.5;
  s.send_b = 0.5;
  // direct evaluation of the required ratio
  double rhs = (0.5 * 0.5 * 0.5 * std::exp(-0.5)) / (0.5 * 0.5 * 0.4 * std::exp(-0.4));
  REQUIRE(s.dec_a1 / s.dec_b1 != Catch::Approx(rhs).epsilon(1e-6));
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::general),
                    ConstraintViolation);
}

TEST_CASE("degenerate decoy pair is rejected") {
  SourceParams s = symmetric_source();
  s.dec_a2 = s.dec_a1;
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::general),
                    ConstraintViolation);
}

TEST_CASE("device and channel invariants are enforced") {
  SourceParams s = symmetric_source();
  DeviceParams d;
  d.failure_prob = 0.0;
  REQUIRE_THROWS_AS(validate(d, ChannelPair{}, s, Variant::general), ConstraintViolation);
  d = DeviceParams{};
  d.ec_inefficiency = 0.9;
  REQUIRE_THROWS_AS(validate(d, ChannelPair{}, s, Variant::general), ConstraintViolation);
  ChannelPair c;
  c.extra_loss_a = 0.0;
  REQUIRE_THROWS_AS(validate(DeviceParams{}, c, s, Variant::general), ConstraintViolation);
  c = ChannelPair{};
  c.len_b = -1.0;
  REQUIRE_THROWS_AS(validate(DeviceParams{}, c, s, Variant::general), ConstraintViolation);
}

TEST_CASE("window probabilities must sum to one") {
  SourceParams s = symmetric_source();
  s.px_a2 += 1e-6;
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::general),
                    ConstraintViolation);
}

TEST_CASE("bind_constrained_intensity: symmetric parameters keep dec_b1 = dec_a1") {
  SourceParams s = symmetric_source();
  s.dec_b1 = 0.123;  // wrong on purpose
  SourceParams bound = bind_constrained_intensity(s);
  REQUIRE(bound.dec_b1 == Catch::Approx(s.dec_a1).epsilon(1e-14));
}

TEST_CASE("bind_constrained_intensity: asymmetric signal example") {
  SourceParams s = symmetric_source();
  s.sig_a = 0.5;
  s.sig_b = 0.25;
  s.dec_a1 = 0.1;
  SourceParams bound = bind_constrained_intensity(s);
  double expected = 0.1 * (0.25 * std::exp(-0.25)) / (0.5 * std::exp(-0.5));
  REQUIRE(bound.dec_b1 == Catch::Approx(expected).epsilon(1e-12));
  REQUIRE(bound.dec_b1 == Catch::Approx(0.0642).margin(5e-5));
}

TEST_CASE("bind_constrained_intensity: eps_A = 0 divides by zero") {
  SourceParams s = symmetric_source();
  s.send_a = 0.0;
  REQUIRE_THROWS_AS(bind_constrained_intensity(s), DivisionByZero);
}

TEST_CASE("bind_constrained_intensity is idempotent") {
  std::mt19937_64 rng = make_rng(7, 0);
  for (int i = 0; i < 50; ++i) {
    SourceParams s = random_source(rng);
    SourceParams once = bind_constrained_intensity(s);
    SourceParams twice = bind_constrained_intensity(once);
    REQUIRE(twice.dec_b1 == once.dec_b1);
  }
}

TEST_CASE("validated general configs satisfy the constraint ratio to 1e-9") {
  std::mt19937_64 rng = make_rng(11, 0);
  for (int i = 0; i < 100; ++i) {
    SourceParams s = random_source(rng);
    ValidatedConfig cfg = validate(DeviceParams{}, ChannelPair{}, s, Variant::general);
    double rhs = eq_ratio_rhs(cfg.source());
    REQUIRE(std::abs(cfg.source().dec_a1 / cfg.source().dec_b1 - rhs) <= 1e-9 * rhs);
  }
}

TEST_CASE("symmetric variants reject asymmetric sources") {
  SourceParams s = symmetric_source();
  s.send_b = 0.25;
  s = bind_constrained_intensity(s);
  s.dec_b2 = std::max(s.dec_b2, 2.0 * s.dec_b1);
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::original),
                    AsymmetricParamsForSymmetricVariant);
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::modified),
                    AsymmetricParamsForSymmetricVariant);
  REQUIRE_NOTHROW(validate(DeviceParams{}, ChannelPair{}, s, Variant::general));
}

TEST_CASE("modified variant equalizes the arm transmittances") {
  ChannelPair c;
  c.len_a = 20.0;
  c.len_b = 120.0;
  ValidatedConfig cfg =
      validate(DeviceParams{}, c, symmetric_source(), Variant::modified);
  ArmTransmittance arms = channel::arms_for(cfg);
  REQUIRE(std::abs(arms.eta_a - arms.eta_b) < 1e-15);
  // the lossier arm is untouched
  REQUIRE(cfg.channel().extra_loss_b == 1.0);
  REQUIRE(cfg.channel().extra_loss_a < 1.0);
}

TEST_CASE("phase offset must be exactly zero") {
  SourceParams s = symmetric_source();
  s.phase_offset = 1e-16;
  REQUIRE_THROWS_AS(validate(DeviceParams{}, ChannelPair{}, s, Variant::general),
                    ConstraintViolation);
}

TEST_CASE("security coefficients: standard allocation gives eps_tot = 22 xi exactly") {
  auto c = SecurityCoefficients::from_failure_prob(1e-10);
  REQUIRE(c.eps_bar == 3e-10);
  REQUIRE(c.eps_n1 == 6e-10);
  REQUIRE(c.eps_sec == 2 * c.eps_hat + 4 * c.eps_bar + c.eps_pa + c.eps_n1);
  REQUIRE(c.eps_tot == 2.2e-9);
}

TEST_CASE("config text round-trips exactly") {
  std::mt19937_64 rng = make_rng(13, 0);
  for (int i = 0; i < 25; ++i) {
    RawConfig c;
    c.source = random_source(rng);
    c.channel.len_a = 3.25;
    c.channel.len_b = 87.5;
    c.device.dark_rate = 7.7e-8;
    c.variant = i % 2 ? Variant::general : Variant::modified;
    RawConfig back = parse_config(serialize_config(c));
    auto fa = detail::numeric_fields(c);
    auto fb = detail::numeric_fields(back);
    for (size_t k = 0; k < fa.size(); ++k) REQUIRE(*fa[k].value == *fb[k].value);
    REQUIRE(back.variant == c.variant);
  }
}

TEST_CASE("config parser reports bad input") {
  REQUIRE_THROWS_AS(parse_config("nonsense = 1\n"), ParseError);
  REQUIRE_THROWS_AS(parse_config("dark_rate = abc\n"), ParseError);
  REQUIRE_THROWS_AS(parse_config("dark_rate 1e-8\n"), ParseError);
  REQUIRE_NOTHROW(parse_config("# comment only\n\n dark_rate = 1e-8 # eol comment\n"));
  REQUIRE(parse_config("kind = Original\n").variant == Variant::original);
  REQUIRE_THROWS_AS(parse_config("kind = sideways\n"), ParseError);
}
