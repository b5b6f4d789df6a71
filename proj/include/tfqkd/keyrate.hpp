#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "tfqkd/channel.hpp"
#include "tfqkd/chernoff.hpp"
#include "tfqkd/config.hpp"
#include "tfqkd/decoy.hpp"
#include "tfqkd/errors.hpp"

namespace tfqkd {

// Per-configuration result: key length, per-window rate, the statistics that
// produced them, the repeaterless benchmarks, and the parameters used.
struct KeyRateReport {
  double key_length = 0;       // N_f, bits
  double rate_per_window = 0;  // R = N_f / N_t
  double n1 = 0;               // effective single-photon events, lower bound
  double e1ph = 0;             // phase-flip error fraction, upper bound
  double n_t = 0;              // effective Z windows
  double e_z = 0;              // Z bit-flip error fraction
  double plob = 0;             // bits per window
  double tgw = 0;              // bits per window
  Variant variant = Variant::general;
  SourceParams params;
};

namespace keyrate {

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy needs p in [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// N_f = n1 [1 - H(e1ph)] - f n_t H(E_Z) - log2(2/eps_cor)
//       - 2 log2(1/(sqrt2 eps_PA eps_hat)), clamped at 0.
inline double key_length(double n1, double e1ph, double n_t, double e_z,
                         const DeviceParams& device, const SecurityCoefficients& sec) {
  double priv = n1 * (1.0 - binary_entropy(e1ph));
  double ec = device.ec_inefficiency * n_t * binary_entropy(e_z);
  double log_cor = std::log2(2.0 / sec.eps_cor);
  double log_pa = 2.0 * std::log2(1.0 / (std::sqrt(2.0) * sec.eps_pa * sec.eps_hat));
  return std::max(0.0, priv - ec - log_cor - log_pa);
}

// Repeaterless benchmarks over the bare channel loss (detector efficiency
// excluded): eta = 10^(-loss/10).
inline double plob_bound(double total_channel_loss_db) {
  if (total_channel_loss_db < 0) throw DomainError("channel loss must be >= 0");
  double eta = std::pow(10.0, -total_channel_loss_db / 10.0);
  if (eta >= 1.0) throw InfiniteBound("PLOB bound diverges at unit transmittance");
  return -std::log2(1.0 - eta);
}

inline double tgw_bound(double total_channel_loss_db) {
  if (total_channel_loss_db < 0) throw DomainError("channel loss must be >= 0");
  double eta = std::pow(10.0, -total_channel_loss_db / 10.0);
  if (eta >= 1.0) throw InfiniteBound("TGW bound diverges at unit transmittance");
  return std::log2((1.0 + eta) / (1.0 - eta));
}

// Full analytic pipeline: channel rates -> tail bounds on expected values ->
// decoy estimates -> realized-count bounds -> key length. A configuration
// past its distance cutoff comes back with rate 0, not an error.
inline KeyRateReport evaluate(const ValidatedConfig& cfg) {
  const SourceParams& s = cfg.source();
  const DeviceParams& dev = cfg.device();
  TailSetting tail{dev.failure_prob};

  ExpectedRates rates = channel::expected_rates(cfg);
  DecoyInputs inputs = chernoff::apply_to_rates(rates, s, tail);

  double s10 = decoy::s10_lower(inputs);
  double s01 = decoy::s01_lower(inputs);
  double s1z = decoy::s1z_lower(s10, s01, s.dec_a1, s.dec_b1);

  KeyRateReport rep;
  rep.variant = cfg.variant();
  rep.params = s;
  rep.e_z = rates.e_z;
  rep.n_t = dev.total_windows * s.pz_a * s.pz_b * rates.s_z;

  if (s1z > 0.0) {
    double e1_exp = decoy::e1ph_upper(inputs.t_delta.upper, inputs.s_vac.lower, s1z,
                                      s.dec_a1, s.dec_b1);
    auto fin = chernoff::finalize_counts(s1z, e1_exp, cfg);
    rep.n1 = fin.n1;
    rep.e1ph = std::min(fin.e1ph, 0.5);  // past 1/2 the privacy term is void anyway
  } else {
    rep.n1 = 0.0;
    rep.e1ph = 0.5;
  }

  rep.key_length = key_length(rep.n1, rep.e1ph, rep.n_t, rep.e_z, dev, cfg.security());
  rep.rate_per_window = rep.key_length / dev.total_windows;

  double loss_db = dev.attenuation * (cfg.channel().len_a + cfg.channel().len_b);
  if (loss_db > 0.0) {
    rep.plob = plob_bound(loss_db);
    rep.tgw = tgw_bound(loss_db);
  } else {
    rep.plob = rep.tgw = std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace keyrate
}  // namespace tfqkd
