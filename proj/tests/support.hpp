#pragma once

// Shared helpers for the test suites: randomized valid configurations.

#include <algorithm>
#include <cmath>
#include <random>

#include "tfqkd/config.hpp"

namespace tfqkd::testsupport {

struct ConfigDraw {
  DeviceParams device;
  ChannelPair channel;
  SourceParams source;
};

// A random general-variant configuration with rates large enough for Monte
// Carlo gates to bite (dark counts well above the hardware-grade 1e-10).
inline ConfigDraw random_config(std::mt19937_64& rng, double len_a, double len_b) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ConfigDraw d;
  d.device.dark_rate = std::pow(10.0, -5.0 + 2.0 * u(rng));  // 1e-5 .. 1e-3
  d.device.misalignment = 0.1 * u(rng);
  d.channel.len_a = len_a;
  d.channel.len_b = len_b;

  SourceParams& s = d.source;
  s.sig_a = 0.2 + 0.6 * u(rng);
  s.sig_b = 0.2 + 0.6 * u(rng);
  s.send_a = 0.05 + 0.3 * u(rng);
  s.send_b = 0.05 + 0.6 * u(rng);
  s.dec_a1 = 0.02 + 0.1 * u(rng);
  s.dec_a2 = s.dec_a1 * (2.0 + 3.0 * u(rng));
  s.slice = 0.05 + 0.6 * u(rng);
  double w[4] = {1.0 + u(rng), 0.3 + 0.5 * u(rng), 0.3 + 0.5 * u(rng), 0.2 + 0.3 * u(rng)};
  double sum = w[0] + w[1] + w[2] + w[3];
  s.pz_a = s.pz_b = w[0] / sum;
  s.px_a0 = s.px_b0 = w[1] / sum;
  s.px_a1 = s.px_b1 = w[2] / sum;
  s.px_a2 = 1.0 - s.pz_a - s.px_a0 - s.px_a1;
  s.px_b2 = s.px_a2;
  s = bind_constrained_intensity(s);
  if (s.dec_b1 >= 1.0) {
    s.dec_a1 *= 0.5 / s.dec_b1;
    s.dec_a2 = std::max(s.dec_a2 * 0.5 / s.dec_b1, 2.0 * s.dec_a1);
    s = bind_constrained_intensity(s);
  }
  s.dec_b2 = std::min(1.0, std::max(s.dec_b1 * (2.0 + 2.0 * u(rng)), s.dec_b1 + 0.01));
  return d;
}

inline ValidatedConfig random_validated(std::mt19937_64& rng, double len_a, double len_b) {
  ConfigDraw d = random_config(rng, len_a, len_b);
  return validate(d.device, d.channel, d.source, Variant::general);
}

}  // namespace tfqkd::testsupport
