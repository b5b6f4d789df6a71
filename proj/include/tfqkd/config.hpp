#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tfqkd/errors.hpp"

namespace tfqkd {

enum class Variant { original, modified, general };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::modified: return "modified";
    case Variant::general: return "general";
  }
  return "general";
}

inline Variant variant_from_string(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "original") return Variant::original;
  if (lower == "modified") return Variant::modified;
  if (lower == "general") return Variant::general;
  throw ParseError("unknown protocol variant '" + std::string(s) +
                   "' (expected original|modified|general)");
}

// Fixed experimental parameters. Defaults are the simulation values used
// throughout this artifact's benchmarks.
struct DeviceParams {
  double total_windows = 1e13;   // N_t, number of time windows (pulse pairs)
  double misalignment = 0.05;    // e_d, wrong-detector probability in X windows
  double dark_rate = 1e-10;      // d, dark count per detector per window
  double detector_eff = 0.5;     // eta_d
  double ec_inefficiency = 1.1;  // f, error-correction inefficiency (>= 1)
  double failure_prob = 1e-10;   // xi, per-tail-pair estimation failure probability
  double attenuation = 0.2;      // dB per km
};

// Fiber lengths Alice->Charlie and Bob->Charlie, plus the transmittance
// factors of any attenuator Charlie inserts (modified-SNS arm balancing).
struct ChannelPair {
  double len_a = 0.0;
  double len_b = 0.0;
  double extra_loss_a = 1.0;  // transmittance factor in (0,1]
  double extra_loss_b = 1.0;
};

// Every tunable source-side parameter: the optimizer's search vector.
struct SourceParams {
  double sig_a = 0.45;   // mu'_A, signal intensity
  double sig_b = 0.45;   // mu'_B
  double dec_a1 = 0.05;  // mu_A1, first decoy intensity
  double dec_a2 = 0.25;  // mu_A2, second decoy intensity
  double dec_b1 = 0.05;  // mu_B1 (tied to dec_a1 by the source constraint)
  double dec_b2 = 0.25;  // mu_B2
  double send_a = 0.2;   // epsilon_A, probability of sending in a signal window
  double send_b = 0.2;   // epsilon_B
  double pz_a = 0.7;     // probability of choosing a signal window
  double pz_b = 0.7;
  double px_a0 = 0.15;   // decoy-window intensity probabilities (0 = vacuum)
  double px_a1 = 0.1;
  double px_a2 = 0.05;
  double px_b0 = 0.15;
  double px_b1 = 0.1;
  double px_b2 = 0.05;
  double slice = 0.1;         // lambda, phase post-selection acceptance width
  double phase_offset = 0.0;  // fixed to 0
};

// Failure-probability budget of the finite-size analysis. The standard
// allocation sets eps_cor = eps_hat = eps_pa = xi, which makes
// eps_tot = 22 xi.
struct SecurityCoefficients {
  double eps_cor = 0;
  double eps_hat = 0;
  double eps_pa = 0;
  double eps_bar = 0;  // 3 xi
  double eps_n1 = 0;   // 6 xi
  double eps_sec = 0;
  double eps_tot = 0;

  static SecurityCoefficients from_failure_prob(double xi) {
    SecurityCoefficients c;
    c.eps_cor = xi;
    c.eps_hat = xi;
    c.eps_pa = xi;
    c.eps_bar = 3 * xi;
    c.eps_n1 = 6 * xi;
    c.eps_sec = 2 * c.eps_hat + 4 * c.eps_bar + c.eps_pa + c.eps_n1;
    c.eps_tot = c.eps_cor + c.eps_sec;
    return c;
  }
};

// Right-hand side of the source-parameter constraint:
//   mu_A1 / mu_B1 = eps_A (1-eps_B) mu'_A exp(-mu'_A)
//                 / (eps_B (1-eps_A) mu'_B exp(-mu'_B)).
inline double eq_ratio_rhs(const SourceParams& s) {
  double num = s.send_a * (1.0 - s.send_b) * s.sig_a * std::exp(-s.sig_a);
  double den = s.send_b * (1.0 - s.send_a) * s.sig_b * std::exp(-s.sig_b);
  if (den == 0.0) throw DivisionByZero("source constraint ratio undefined: eps_B(1-eps_A)mu'_B exp(-mu'_B) = 0");
  return num / den;
}

// Overwrites dec_b1 with the value forced by the source constraint for the
// k = 1 decoy pair. dec_b2 stays free: only k = 1 data estimates the
// single-photon phase error, so the second pair need not satisfy the tie.
inline SourceParams bind_constrained_intensity(SourceParams s) {
  double den = s.send_a * (1.0 - s.send_b) * s.sig_a * std::exp(-s.sig_a);
  if (den == 0.0)
    throw DivisionByZero("cannot bind dec_b1: eps_A(1-eps_B)mu'_A exp(-mu'_A) = 0");
  double num = s.send_b * (1.0 - s.send_a) * s.sig_b * std::exp(-s.sig_b);
  // Multiplying by the ratio keeps dec_b1 bit-equal to dec_a1 for symmetric
  // parameters (num == den exactly), which the symmetric variants require.
  s.dec_b1 = s.dec_a1 * (num / den);
  return s;
}

namespace detail {

inline bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

inline void check(bool ok, const std::string& what) {
  if (!ok) throw ConstraintViolation(what);
}

}  // namespace detail

// A parameter set certified against every type invariant. Immutable; safe
// to share across concurrent evaluators.
class ValidatedConfig {
 public:
  const DeviceParams& device() const { return device_; }
  const ChannelPair& channel() const { return channel_; }
  const SourceParams& source() const { return source_; }
  Variant variant() const { return variant_; }
  SecurityCoefficients security() const {
    return SecurityCoefficients::from_failure_prob(device_.failure_prob);
  }

  friend ValidatedConfig validate(const DeviceParams&, const ChannelPair&,
                                  const SourceParams&, Variant);

 private:
  ValidatedConfig(DeviceParams d, ChannelPair c, SourceParams s, Variant v)
      : device_(d), channel_(c), source_(s), variant_(v) {}

  DeviceParams device_;
  ChannelPair channel_;
  SourceParams source_;
  Variant variant_;
};

inline ValidatedConfig validate(const DeviceParams& device, const ChannelPair& channel,
                                const SourceParams& source, Variant variant) {
  using detail::check;
  check(device.total_windows >= 1.0, "total_windows must be >= 1");
  check(detail::is_prob(device.misalignment), "misalignment must be a probability in [0,1]");
  check(detail::is_prob(device.dark_rate), "dark_rate must be a probability in [0,1]");
  check(detail::is_prob(device.detector_eff), "detector_eff must be a probability in [0,1]");
  check(device.ec_inefficiency >= 1.0, "ec_inefficiency must be >= 1");
  check(device.failure_prob > 0.0 && device.failure_prob < 1.0,
        "failure_prob must lie in (0,1)");
  check(device.attenuation >= 0.0, "attenuation must be >= 0");

  check(channel.len_a >= 0.0 && channel.len_b >= 0.0, "channel lengths must be >= 0");
  check(channel.extra_loss_a > 0.0 && channel.extra_loss_a <= 1.0,
        "extra_loss_a must lie in (0,1]");
  check(channel.extra_loss_b > 0.0 && channel.extra_loss_b <= 1.0,
        "extra_loss_b must lie in (0,1]");

  check(source.sig_a > 0.0 && source.sig_b > 0.0, "signal intensities must be > 0");
  check(source.dec_a1 >= 0.0 && source.dec_a2 >= 0.0 && source.dec_b1 >= 0.0 &&
            source.dec_b2 >= 0.0,
        "decoy intensities must be >= 0");
  check(source.send_a > 0.0 && source.send_a < 1.0 && source.send_b > 0.0 &&
            source.send_b < 1.0,
        "sending probabilities must lie in (0,1)");
  for (double p : {source.pz_a, source.pz_b, source.px_a0, source.px_a1, source.px_a2,
                   source.px_b0, source.px_b1, source.px_b2})
    check(detail::is_prob(p), "window probabilities must lie in [0,1]");

  double sum_a = source.pz_a + source.px_a0 + source.px_a1 + source.px_a2;
  double sum_b = source.pz_b + source.px_b0 + source.px_b1 + source.px_b2;
  check(std::abs(sum_a - 1.0) <= 1e-12,
        "Alice's window probabilities must sum to 1 (within 1e-12)");
  check(std::abs(sum_b - 1.0) <= 1e-12,
        "Bob's window probabilities must sum to 1 (within 1e-12)");

  check(source.dec_a1 < source.dec_a2,
        "degenerate decoy pair: dec_a1 must be < dec_a2");
  check(source.dec_b1 < source.dec_b2,
        "degenerate decoy pair: dec_b1 must be < dec_b2");
  check(source.slice > 0.0 && source.slice <= 1.0, "slice must lie in (0,1]");
  check(source.phase_offset == 0.0, "phase_offset must be exactly 0");

  // The k = 1 decoy pair must satisfy the source constraint.
  double rhs = eq_ratio_rhs(source);
  check(source.dec_b1 > 0.0, "dec_b1 must be > 0 to satisfy the source constraint");
  double ratio = source.dec_a1 / source.dec_b1;
  check(std::abs(ratio - rhs) <= 1e-9 * std::abs(rhs),
        "source constraint violated: dec_a1/dec_b1 must equal "
        "eps_A(1-eps_B)mu'_A exp(-mu'_A) / [eps_B(1-eps_A)mu'_B exp(-mu'_B)] "
        "(relative tolerance 1e-9)");

  ChannelPair chan = channel;
  if (variant != Variant::general) {
    bool symmetric = source.sig_a == source.sig_b && source.dec_a1 == source.dec_b1 &&
                     source.dec_a2 == source.dec_b2 && source.send_a == source.send_b &&
                     source.pz_a == source.pz_b && source.px_a0 == source.px_b0 &&
                     source.px_a1 == source.px_b1 && source.px_a2 == source.px_b2;
    if (!symmetric)
      throw AsymmetricParamsForSymmetricVariant(
          std::string(to_string(variant)) +
          " variant requires identical source parameters on both sides");
  }
  if (variant == Variant::modified) {
    // Charlie attenuates the better arm until both transmittances match.
    double eta_a = device.detector_eff * std::pow(10.0, -device.attenuation * channel.len_a / 10.0);
    double eta_b = device.detector_eff * std::pow(10.0, -device.attenuation * channel.len_b / 10.0);
    if (eta_a > eta_b) {
      chan.extra_loss_a = eta_b / eta_a;
      chan.extra_loss_b = 1.0;
    } else if (eta_b > eta_a) {
      chan.extra_loss_a = 1.0;
      chan.extra_loss_b = eta_a / eta_b;
    } else {
      chan.extra_loss_a = chan.extra_loss_b = 1.0;
    }
  }

  return ValidatedConfig(device, chan, source, variant);
}

// ---------------------------------------------------------------------------
// Flat key = value configuration text.

struct RawConfig {
  DeviceParams device;
  ChannelPair channel;
  SourceParams source;
  Variant variant = Variant::general;

  ValidatedConfig validated() const { return validate(device, channel, source, variant); }
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

struct FieldRef {
  const char* name;
  double* value;
};

inline std::vector<FieldRef> numeric_fields(RawConfig& c) {
  return {
      {"total_windows", &c.device.total_windows},
      {"misalignment", &c.device.misalignment},
      {"dark_rate", &c.device.dark_rate},
      {"detector_eff", &c.device.detector_eff},
      {"ec_inefficiency", &c.device.ec_inefficiency},
      {"failure_prob", &c.device.failure_prob},
      {"attenuation", &c.device.attenuation},
      {"len_a", &c.channel.len_a},
      {"len_b", &c.channel.len_b},
      {"extra_loss_a", &c.channel.extra_loss_a},
      {"extra_loss_b", &c.channel.extra_loss_b},
      {"sig_a", &c.source.sig_a},
      {"sig_b", &c.source.sig_b},
      {"dec_a1", &c.source.dec_a1},
      {"dec_a2", &c.source.dec_a2},
      {"dec_b1", &c.source.dec_b1},
      {"dec_b2", &c.source.dec_b2},
      {"send_a", &c.source.send_a},
      {"send_b", &c.source.send_b},
      {"pz_a", &c.source.pz_a},
      {"pz_b", &c.source.pz_b},
      {"px_a0", &c.source.px_a0},
      {"px_a1", &c.source.px_a1},
      {"px_a2", &c.source.px_a2},
      {"px_b0", &c.source.px_b0},
      {"px_b1", &c.source.px_b1},
      {"px_b2", &c.source.px_b2},
      {"slice", &c.source.slice},
      {"phase_offset", &c.source.phase_offset},
  };
}

inline std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(std::string_view key, std::string_view text) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ParseError("bad numeric value '" + std::string(text) + "' for key '" +
                     std::string(key) + "'");
  return v;
}

}  // namespace detail

// Applies one `name = value` setting; shared by the file parser and the CLI
// override flags.
inline void apply_setting(RawConfig& c, std::string_view key, std::string_view value) {
  if (key == "kind") {
    c.variant = variant_from_string(value);
    return;
  }
  for (auto& f : detail::numeric_fields(c)) {
    if (key == f.name) {
      *f.value = detail::parse_number(key, value);
      return;
    }
  }
  throw ParseError("unknown configuration key '" + std::string(key) + "'");
}

// Parses flat `name = value` text (UTF-8, '#' comments). Unspecified keys
// keep their defaults.
inline RawConfig parse_config(std::string_view text) {
  RawConfig c;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected 'name = value'");
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return c;
}

// Emits every field with round-trip precision; parse_config(serialize_config(c))
// reproduces c exactly.
inline std::string serialize_config(const RawConfig& c) {
  RawConfig copy = c;
  std::string out;
  out += "# device\n";
  auto fields = detail::numeric_fields(copy);
  auto emit_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      out += std::string(fields[i].name) + " = " + format_double(*fields[i].value) + "\n";
  };
  emit_range(0, 7);
  out += "\n# channel\n";
  emit_range(7, 11);
  out += "\n# source\n";
  emit_range(11, fields.size());
  out += "\n# protocol\n";
  out += "kind = " + std::string(to_string(c.variant)) + "\n";
  return out;
}

}  // namespace tfqkd
