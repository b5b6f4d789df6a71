#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tfqkd/channel.hpp"
#include "tfqkd/config.hpp"
#include "tfqkd/rng.hpp"

namespace tfqkd {

// One window's drawn settings. The global phases are removed exactly by
// Charlie's compensation, so the sampler keeps them at 0 instead of wasting
// stream draws on them.
struct PulseSetting {
  int kind_a = 0;  // 0 = signal window, 1..3 = decoy intensity index 0..2
  int kind_b = 0;
  double intensity_a = 0;
  double intensity_b = 0;
  double delta_a = 0;  // private phases, [0, 2pi)
  double delta_b = 0;
  double gamma_a = 0;
  double gamma_b = 0;
  bool send_a = false;
  bool send_b = false;
};

struct Counter {
  std::uint64_t windows = 0;
  std::uint64_t effective = 0;
  std::uint64_t errors = 0;

  double rate() const { return windows ? double(effective) / double(windows) : 0.0; }
  double error_per_window() const {
    return windows ? double(errors) / double(windows) : 0.0;
  }
  double error_fraction() const {
    return effective ? double(errors) / double(effective) : 0.0;
  }
  void merge(const Counter& o) {
    windows += o.windows;
    effective += o.effective;
    errors += o.errors;
  }
};

// Empirical counterpart of ExpectedRates. For Z windows `errors` counts bit
// flips among effective events; for the slice it counts the wrong-detector
// error events.
struct TallySet {
  Counter z;
  std::array<std::array<Counter, 3>, 3> xpair{};  // [alice decoy][bob decoy]
  Counter slice;                                  // accepted subset of xpair[1][1]
  std::uint64_t mismatch = 0;
  std::uint64_t total = 0;

  void merge(const TallySet& o) {
    z.merge(o.z);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) xpair[i][j].merge(o.xpair[i][j]);
    slice.merge(o.slice);
    mismatch += o.mismatch;
    total += o.total;
  }
};

enum class Side { alice, bob };

namespace montecarlo {

namespace detail {

inline double uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

struct WindowModel {
  double eta_a, eta_b, dark, misalign, cos_floor;  // accept |cos theta| >= cos_floor

  // Draws detector clicks for one window; returns (left, right) after any
  // misalignment swap (interference windows only).
  void clicks(double mu_a, double mu_b, double cos_theta, bool x_window,
              std::mt19937_64& rng, bool& left, bool& right) const {
    double x = eta_a * mu_a;
    double y = eta_b * mu_b;
    double half = 0.5 * (x + y);
    double cross = std::sqrt(x * y) * cos_theta;
    double p_left = 1.0 - (1.0 - dark) * std::exp(-(half + cross));
    double p_right = 1.0 - (1.0 - dark) * std::exp(-(half - cross));
    left = uniform(rng) < p_left;
    right = uniform(rng) < p_right;
    if (x_window && misalign > 0.0 && uniform(rng) < misalign) std::swap(left, right);
  }
};

inline WindowModel make_model(const ValidatedConfig& cfg) {
  ArmTransmittance arms = channel::arms_for(cfg);
  return {arms.eta_a, arms.eta_b, cfg.device().dark_rate, cfg.device().misalignment,
          1.0 - cfg.source().slice};
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Simulates one window with forced (or drawn) setting kinds.
inline void run_window(const ValidatedConfig& cfg, const WindowModel& m, int kind_a,
                       int kind_b, std::mt19937_64& rng, TallySet& tally) {
  const SourceParams& s = cfg.source();
  PulseSetting p;
  p.kind_a = kind_a;
  p.kind_b = kind_b;
  p.delta_a = kTwoPi * uniform(rng);
  p.delta_b = kTwoPi * uniform(rng);
  double cos_theta = std::cos(p.delta_a - p.delta_b);

  if (kind_a == 0 && kind_b == 0) {
    p.send_a = uniform(rng) < s.send_a;
    p.send_b = uniform(rng) < s.send_b;
    p.intensity_a = p.send_a ? s.sig_a : 0.0;
    p.intensity_b = p.send_b ? s.sig_b : 0.0;
    bool left = false, right = false;
    m.clicks(p.intensity_a, p.intensity_b, cos_theta, false, rng, left, right);
    tally.z.windows++;
    if (left != right) {
      tally.z.effective++;
      int bit_a = p.send_a ? 1 : 0;
      int bit_b = p.send_b ? 0 : 1;
      if (bit_a != bit_b) tally.z.errors++;
    }
  } else if (kind_a > 0 && kind_b > 0) {
    int j = kind_a - 1, k = kind_b - 1;
    const double mu_a[3] = {0.0, s.dec_a1, s.dec_a2};
    const double mu_b[3] = {0.0, s.dec_b1, s.dec_b2};
    p.intensity_a = mu_a[j];
    p.intensity_b = mu_b[k];
    bool left = false, right = false;
    m.clicks(p.intensity_a, p.intensity_b, cos_theta, true, rng, left, right);
    Counter& c = tally.xpair[j][k];
    c.windows++;
    bool effective = left != right;
    if (effective) c.effective++;
    if (j == 1 && k == 1 && std::abs(cos_theta) >= m.cos_floor) {
      tally.slice.windows++;
      if (effective) {
        tally.slice.effective++;
        bool error = left ? (cos_theta < 0.0) : (cos_theta >= 0.0);
        if (error) tally.slice.errors++;
      }
    }
  } else {
    tally.mismatch++;
  }
  tally.total++;
}

}  // namespace detail

// Full-protocol sampler: both sides draw their window kinds each round.
inline TallySet simulate(const ValidatedConfig& cfg, std::uint64_t samples,
                         std::uint64_t seed) {
  const SourceParams& s = cfg.source();
  detail::WindowModel m = detail::make_model(cfg);
  std::mt19937_64 rng = make_rng(seed, 0);
  TallySet tally;

  auto draw_kind = [](double u, double pz, double p0, double p1) {
    if (u < pz) return 0;
    u -= pz;
    if (u < p0) return 1;
    u -= p0;
    if (u < p1) return 2;
    return 3;
  };
  for (std::uint64_t i = 0; i < samples; ++i) {
    int ka = draw_kind(detail::uniform(rng), s.pz_a, s.px_a0, s.px_a1);
    int kb = draw_kind(detail::uniform(rng), s.pz_b, s.px_b0, s.px_b1);
    detail::run_window(cfg, m, ka, kb, rng, tally);
  }
  return tally;
}

// The setting pairs the estimators consume; forcing them gives every rate
// adequate statistics regardless of the window probabilities.
enum class Stratum { z = 0, x00, x10, x20, x01, x02, x11 };

inline constexpr std::array<Stratum, 7> all_strata = {
    Stratum::z,   Stratum::x00, Stratum::x10, Stratum::x20,
    Stratum::x01, Stratum::x02, Stratum::x11};

inline TallySet simulate_stratum(const ValidatedConfig& cfg, Stratum stratum,
                                 std::uint64_t samples, std::uint64_t seed) {
  detail::WindowModel m = detail::make_model(cfg);
  std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(stratum) + 1);
  TallySet tally;
  int ka = 0, kb = 0;
  switch (stratum) {
    case Stratum::z: ka = 0; kb = 0; break;
    case Stratum::x00: ka = 1; kb = 1; break;
    case Stratum::x10: ka = 2; kb = 1; break;
    case Stratum::x20: ka = 3; kb = 1; break;
    case Stratum::x01: ka = 1; kb = 2; break;
    case Stratum::x02: ka = 1; kb = 3; break;
    case Stratum::x11: ka = 2; kb = 2; break;
  }
  for (std::uint64_t i = 0; i < samples; ++i)
    detail::run_window(cfg, m, ka, kb, rng, tally);
  return tally;
}

// Runs every stratum (concurrently when jobs > 1; seed streams are split per
// stratum, so the schedule cannot change the result) and merges the tallies.
inline TallySet simulate_stratified(const ValidatedConfig& cfg,
                                    std::uint64_t samples_per_stratum, std::uint64_t seed,
                                    int jobs = 1) {
  TallySet merged;
  if (jobs <= 1) {
    for (Stratum st : all_strata)
      merged.merge(simulate_stratum(cfg, st, samples_per_stratum, seed));
    return merged;
  }
  std::vector<std::future<TallySet>> futures;
  futures.reserve(all_strata.size());
  for (Stratum st : all_strata)
    futures.push_back(std::async(std::launch::async, [&, st] {
      return simulate_stratum(cfg, st, samples_per_stratum, seed);
    }));
  for (auto& f : futures) merged.merge(f.get());
  return merged;
}

// Sends exactly one photon down the chosen arm each window: it survives with
// probability eta and routes to a uniformly random detector; dark counts
// apply to both detectors. Returns the effective-event rate.
inline double simulate_single_photon(Side arm, const ArmTransmittance& arms,
                                     const DeviceParams& device, std::uint64_t samples,
                                     std::uint64_t seed) {
  double eta = arm == Side::alice ? arms.eta_a : arms.eta_b;
  double dark = device.dark_rate;
  std::mt19937_64 rng = make_rng(seed, arm == Side::alice ? 101 : 102);
  std::uint64_t effective = 0;
  for (std::uint64_t i = 0; i < samples; ++i) {
    bool left = false, right = false;
    if (detail::uniform(rng) < eta) {
      (detail::uniform(rng) < 0.5 ? left : right) = true;
    }
    if (!left && detail::uniform(rng) < dark) left = true;
    if (!right && detail::uniform(rng) < dark) right = true;
    if (left != right) effective++;
  }
  return double(effective) / double(samples);
}

// ---------------------------------------------------------------------------
// Analytic-vs-empirical comparison gates (the oracle the verify command runs).

struct GateResult {
  std::string name;
  double analytic = 0;
  double empirical = 0;
  double sigma = 0;  // binomial standard error under the analytic rate
  std::uint64_t n = 0;
  bool pass = false;
};

// Every gate demands |analytic - empirical| <= 3 sigma. The analytic side may
// be computed from an overridden device (fault-injection hook for testing the
// gate machinery itself).
inline std::vector<GateResult> oracle_gates(const ValidatedConfig& cfg,
                                            std::uint64_t samples_per_stratum,
                                            std::uint64_t seed,
                                            const DeviceParams* analytic_device = nullptr,
                                            int jobs = 1) {
  ValidatedConfig analytic_cfg =
      analytic_device ? validate(*analytic_device, cfg.channel(), cfg.source(), cfg.variant())
                      : cfg;
  ExpectedRates rates = channel::expected_rates(analytic_cfg);
  TallySet tally = simulate_stratified(cfg, samples_per_stratum, seed, jobs);

  std::vector<GateResult> gates;
  auto add = [&](std::string name, double analytic, double empirical, std::uint64_t n) {
    GateResult g;
    g.name = std::move(name);
    g.analytic = analytic;
    g.empirical = empirical;
    g.n = n;
    if (n == 0) {
      g.sigma = std::numeric_limits<double>::infinity();
      g.pass = true;  // no draws, nothing to contradict
    } else {
      g.sigma = std::sqrt(std::max(0.0, analytic * (1.0 - analytic)) / double(n));
      g.pass = std::abs(analytic - empirical) <= 3.0 * g.sigma;
    }
    gates.push_back(std::move(g));
  };

  add("s_vac", rates.s_vac, tally.xpair[0][0].rate(), tally.xpair[0][0].windows);
  add("s_a1_0", rates.s_a1_0, tally.xpair[1][0].rate(), tally.xpair[1][0].windows);
  add("s_a2_0", rates.s_a2_0, tally.xpair[2][0].rate(), tally.xpair[2][0].windows);
  add("s_0_b1", rates.s_0_b1, tally.xpair[0][1].rate(), tally.xpair[0][1].windows);
  add("s_0_b2", rates.s_0_b2, tally.xpair[0][2].rate(), tally.xpair[0][2].windows);
  add("s_z", rates.s_z, tally.z.rate(), tally.z.windows);
  add("e_z", rates.e_z, tally.z.error_fraction(), tally.z.effective);
  add("t_delta", rates.t_delta, tally.slice.error_per_window(), tally.slice.windows);
  add("s_delta", rates.s_delta, tally.slice.rate(), tally.slice.windows);
  add("slice_fraction", channel::slice_fraction(cfg.source().slice),
      tally.xpair[1][1].windows
          ? double(tally.slice.windows) / double(tally.xpair[1][1].windows)
          : 0.0,
      tally.xpair[1][1].windows);
  return gates;
}

}  // namespace montecarlo
}  // namespace tfqkd
