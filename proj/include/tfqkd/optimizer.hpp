#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tfqkd/config.hpp"
#include "tfqkd/keyrate.hpp"
#include "tfqkd/rng.hpp"

namespace tfqkd {

// Search bounds and optimizer controls. The window-probability simplex is
// handled by a softmax reparameterization, so only bound-type limits appear
// here.
struct SearchSpace {
  double intensity_lo = 1e-6;
  double intensity_hi = 1.0;
  double signal_lo = 1e-3;
  double signal_hi = 1.0;
  double prob_lo = 1e-6;
  double prob_hi = 1.0 - 1e-6;
  double slice_lo = 1e-4;
  double slice_hi = 1.0;

  int restarts = 8;
  int max_evals_per_restart = 2000;
  double spread_tol = 1e-3;  // relative rate spread that ends a restart
  int jobs = 1;

  // Called with every candidate that reaches the evaluation pipeline.
  std::function<void(const SourceParams&)> probe;

  // Parameters a variant does not search over (bound or mirrored instead).
  static std::vector<std::string> frozen_names(Variant v) {
    if (v == Variant::general)
      return {"dec_b1 (bound by the source constraint)", "px_a0 (normalization)",
              "px_b0 (normalization)", "phase_offset"};
    return {"sig_b",  "dec_b1", "dec_b2", "send_b", "pz_b",
            "px_b0",  "px_b1",  "px_b2",  "px_a0 (normalization)", "phase_offset"};
  }
};

struct OptimizeOutcome {
  KeyRateReport best;
  std::uint64_t evaluations = 0;  // candidates run through the rate pipeline
  int restarts = 0;
  bool converged = false;
};

namespace optimizer {

namespace detail {

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

inline double logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

// Log-scale bounded map: u in R -> [lo, hi].
inline double decode_log(double u, double lo, double hi) {
  return std::exp(std::log(lo) + logistic(u) * (std::log(hi) - std::log(lo)));
}

inline double encode_log(double v, double lo, double hi) {
  double f = (std::log(std::clamp(v, lo, hi)) - std::log(lo)) / (std::log(hi) - std::log(lo));
  return logit(f);
}

// Linear bounded map for probabilities.
inline double decode_lin(double u, double lo, double hi) {
  return lo + logistic(u) * (hi - lo);
}

inline double encode_lin(double v, double lo, double hi) {
  return logit((std::clamp(v, lo, hi) - lo) / (hi - lo));
}

// (pz, px1, px2, px0) from three free logits (vacuum slot pinned at 0),
// floored at 1e-6 by mixing so no component can starve.
inline void decode_window_probs(double lz, double l1, double l2, double& pz, double& p0,
                                double& p1, double& p2) {
  double ez = std::exp(std::clamp(lz, -40.0, 40.0));
  double e1 = std::exp(std::clamp(l1, -40.0, 40.0));
  double e2 = std::exp(std::clamp(l2, -40.0, 40.0));
  double sum = ez + e1 + e2 + 1.0;
  constexpr double mix = 1e-6;
  pz = (1.0 - 4.0 * mix) * (ez / sum) + mix;
  p1 = (1.0 - 4.0 * mix) * (e1 / sum) + mix;
  p2 = (1.0 - 4.0 * mix) * (e2 / sum) + mix;
  p0 = 1.0 - pz - p1 - p2;
}

struct Decoded {
  SourceParams params;
  bool valid = false;
  double violation = 0;  // positive distance from the feasible region
};

inline int dimensions(Variant v) { return v == Variant::general ? 14 : 8; }

// General layout: sig_a, sig_b, dec_a1, dec_a2, dec_b2, send_a, send_b,
//                 [pz_a,px_a1,px_a2 logits], [pz_b,px_b1,px_b2 logits], slice.
// Symmetric layout: sig, dec1, dec2, send, [window logits], slice (mirrored).
inline Decoded decode(const std::vector<double>& x, Variant variant,
                      const SearchSpace& sp) {
  Decoded d;
  SourceParams& s = d.params;
  if (variant == Variant::general) {
    s.sig_a = decode_log(x[0], sp.signal_lo, sp.signal_hi);
    s.sig_b = decode_log(x[1], sp.signal_lo, sp.signal_hi);
    double i1 = decode_log(x[2], sp.intensity_lo, sp.intensity_hi);
    double i2 = decode_log(x[3], sp.intensity_lo, sp.intensity_hi);
    s.dec_a1 = std::min(i1, i2);  // the decoy pair is unordered in search space
    s.dec_a2 = std::max(i1, i2);
    s.dec_b2 = decode_log(x[4], sp.intensity_lo, sp.intensity_hi);
    s.send_a = decode_lin(x[5], sp.prob_lo, sp.prob_hi);
    s.send_b = decode_lin(x[6], sp.prob_lo, sp.prob_hi);
    decode_window_probs(x[7], x[8], x[9], s.pz_a, s.px_a0, s.px_a1, s.px_a2);
    decode_window_probs(x[10], x[11], x[12], s.pz_b, s.px_b0, s.px_b1, s.px_b2);
    s.slice = decode_log(x[13], sp.slice_lo, sp.slice_hi);
  } else {
    s.sig_a = s.sig_b = decode_log(x[0], sp.signal_lo, sp.signal_hi);
    double i1 = decode_log(x[1], sp.intensity_lo, sp.intensity_hi);
    double i2 = decode_log(x[2], sp.intensity_lo, sp.intensity_hi);
    s.dec_a1 = s.dec_b1 = std::min(i1, i2);
    s.dec_a2 = s.dec_b2 = std::max(i1, i2);
    s.send_a = s.send_b = decode_lin(x[3], sp.prob_lo, sp.prob_hi);
    decode_window_probs(x[4], x[5], x[6], s.pz_a, s.px_a0, s.px_a1, s.px_a2);
    s.pz_b = s.pz_a;
    s.px_b0 = s.px_a0;
    s.px_b1 = s.px_a1;
    s.px_b2 = s.px_a2;
    s.slice = decode_log(x[7], sp.slice_lo, sp.slice_hi);
  }

  if (s.dec_a1 >= s.dec_a2) {
    d.violation = 1.0;
    return d;
  }
  if (variant == Variant::general) s = bind_constrained_intensity(s);
  if (s.dec_b1 < sp.intensity_lo || s.dec_b1 > sp.intensity_hi) {
    d.violation =
        1.0 + std::abs(std::log(std::max(s.dec_b1, 1e-300) / sp.intensity_hi));
    return d;
  }
  if (s.dec_b1 >= s.dec_b2) {
    d.violation = 1.0 + (s.dec_b1 - s.dec_b2) / sp.intensity_hi;
    return d;
  }
  d.valid = true;
  return d;
}

inline std::vector<double> encode(const SourceParams& s, Variant variant,
                                  const SearchSpace& sp) {
  auto wlogits = [](double pz, double p0, double p1, double p2, double* out) {
    p0 = std::max(p0, 1e-9);
    out[0] = std::log(std::max(pz, 1e-9) / p0);
    out[1] = std::log(std::max(p1, 1e-9) / p0);
    out[2] = std::log(std::max(p2, 1e-9) / p0);
  };
  std::vector<double> x(dimensions(variant));
  if (variant == Variant::general) {
    x[0] = encode_log(s.sig_a, sp.signal_lo, sp.signal_hi);
    x[1] = encode_log(s.sig_b, sp.signal_lo, sp.signal_hi);
    x[2] = encode_log(s.dec_a1, sp.intensity_lo, sp.intensity_hi);
    x[3] = encode_log(s.dec_a2, sp.intensity_lo, sp.intensity_hi);
    x[4] = encode_log(s.dec_b2, sp.intensity_lo, sp.intensity_hi);
    x[5] = encode_lin(s.send_a, sp.prob_lo, sp.prob_hi);
    x[6] = encode_lin(s.send_b, sp.prob_lo, sp.prob_hi);
    wlogits(s.pz_a, s.px_a0, s.px_a1, s.px_a2, &x[7]);
    wlogits(s.pz_b, s.px_b0, s.px_b1, s.px_b2, &x[10]);
    x[13] = encode_log(s.slice, sp.slice_lo, sp.slice_hi);
  } else {
    x[0] = encode_log(s.sig_a, sp.signal_lo, sp.signal_hi);
    x[1] = encode_log(s.dec_a1, sp.intensity_lo, sp.intensity_hi);
    x[2] = encode_log(s.dec_a2, sp.intensity_lo, sp.intensity_hi);
    x[3] = encode_lin(s.send_a, sp.prob_lo, sp.prob_hi);
    wlogits(s.pz_a, s.px_a0, s.px_a1, s.px_a2, &x[4]);
    x[7] = encode_log(s.slice, sp.slice_lo, sp.slice_hi);
  }
  return x;
}

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0;
  std::uint64_t evals = 0;
  bool converged = false;
};

// Downhill simplex, minimizing. Standard reflect/expand/contract/shrink
// coefficients; stops when the simplex value spread falls below spread_tol
// relative to the best value, or the evaluation budget runs out.
template <class F>
NelderMeadResult nelder_mead_min(const F& f, const std::vector<double>& x0, double step,
                                 int max_evals, double spread_tol) {
  const size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
  std::vector<double> fv(n + 1);
  std::uint64_t evals = 0;
  auto eval = [&](const std::vector<double>& p) {
    ++evals;
    return f(p);
  };
  for (size_t i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

  std::vector<size_t> order(n + 1);
  bool converged = false;
  while (evals < static_cast<std::uint64_t>(max_evals)) {
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return fv[a] < fv[b]; });
    size_t best = order[0], worst = order[n], second = order[n - 1];
    double spread = fv[worst] - fv[best];
    if (spread <= spread_tol * std::max(std::abs(fv[best]), 1e-300)) {
      converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (size_t k = 0; k <= n; ++k) {
      if (k == worst) continue;
      for (size_t i = 0; i < n; ++i) centroid[i] += pts[k][i];
    }
    for (double& c : centroid) c /= double(n);

    auto along = [&](double coef) {
      std::vector<double> p(n);
      for (size_t i = 0; i < n; ++i) p[i] = centroid[i] + coef * (centroid[i] - pts[worst][i]);
      return p;
    };

    std::vector<double> xr = along(1.0);
    double fr = eval(xr);
    if (fr < fv[best]) {
      std::vector<double> xe = along(2.0);
      double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = std::move(xe);
        fv[worst] = fe;
      } else {
        pts[worst] = std::move(xr);
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = std::move(xr);
      fv[worst] = fr;
    } else {
      std::vector<double> xc = along(fr < fv[worst] ? 0.5 : -0.5);
      double fc = eval(xc);
      if (fc < std::min(fr, fv[worst])) {
        pts[worst] = std::move(xc);
        fv[worst] = fc;
      } else {
        for (size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (size_t i = 0; i < n; ++i)
            pts[k][i] = pts[best][i] + 0.5 * (pts[k][i] - pts[best][i]);
          fv[k] = eval(pts[k]);
        }
      }
    }
  }

  size_t best = 0;
  for (size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return {pts[best], fv[best], evals, converged};
}

struct RestartResult {
  double rate = -1.0;
  SourceParams params;
  bool has_params = false;
  std::uint64_t pipeline_evals = 0;
  bool converged = false;
};

}  // namespace detail

// A reasonable starting point: moderate signal intensity and sending odds,
// with Bob's sending odds scaled by the transmittance ratio so the bound
// decoy intensity lands near interference matching (eta_A mu_A1 = eta_B mu_B1).
inline SourceParams heuristic_start(const DeviceParams& device, const ChannelPair& channel,
                                    Variant variant, const SearchSpace& sp = {}) {
  double eta_a = channel::transmittance(channel.len_a, device, channel.extra_loss_a);
  double eta_b = channel::transmittance(channel.len_b, device, channel.extra_loss_b);
  double ratio = (variant == Variant::general && eta_a > 0 && eta_b > 0) ? eta_a / eta_b : 1.0;

  SourceParams s;
  s.sig_a = s.sig_b = 0.45;
  s.send_a = 0.2;
  double odds = ratio * s.send_a / (1.0 - s.send_a);
  s.send_b = std::clamp(odds / (1.0 + odds), 0.02, 0.98);

  double hi = sp.intensity_hi, lo = sp.intensity_lo;
  s.dec_a1 = std::clamp(0.05 / std::sqrt(std::max(ratio, 1.0)), lo * 4.0, 0.4);
  s.dec_a2 = std::clamp(5.0 * s.dec_a1, s.dec_a1 * 2.0, hi);
  s.dec_b2 = std::clamp(5.0 * ratio * s.dec_a1, lo * 8.0, hi);
  s.pz_a = s.pz_b = 0.6;
  s.px_a1 = s.px_b1 = 0.2;
  s.px_a2 = s.px_b2 = 0.06;
  s.px_a0 = s.px_b0 = 1.0 - s.pz_a - s.px_a1 - s.px_a2;
  s.slice = 0.1;

  if (variant != Variant::general) {
    s.sig_b = s.sig_a;
    s.send_b = s.send_a;
    s.dec_b2 = s.dec_a2;
  }
  s = bind_constrained_intensity(s);
  if (s.dec_b1 >= s.dec_b2) {
    // Extreme asymmetry can push the bound intensity past Bob's second decoy;
    // shrink Alice's first decoy until the pair is ordered again.
    s.dec_a1 *= 0.5 * s.dec_b2 / s.dec_b1;
    s.dec_a2 = std::clamp(5.0 * s.dec_a1, s.dec_a1 * 2.0, hi);
    s = bind_constrained_intensity(s);
  }
  return s;
}

// Maximizes the per-window key rate over the free source parameters.
// Deterministic for a fixed seed: restart start points and their generator
// streams depend only on (seed, restart index), so restarts may run
// concurrently without changing the outcome.
inline OptimizeOutcome optimize(const DeviceParams& device, const ChannelPair& channel,
                                Variant variant, const SearchSpace& space,
                                std::uint64_t seed,
                                const std::optional<SourceParams>& warm_start = {}) {
  const int dims = detail::dimensions(variant);
  const int restarts = std::max(1, space.restarts);

  auto start_for = [&](int slot) -> std::vector<double> {
    int fixed = warm_start ? 2 : 1;
    if (warm_start && slot == 0) return detail::encode(*warm_start, variant, space);
    if (slot < fixed) return detail::encode(heuristic_start(device, channel, variant, space),
                                            variant, space);
    std::mt19937_64 rng = make_rng(seed, 1000 + std::uint64_t(slot));
    std::vector<double> x(dims);
    for (double& u : x) u = -3.0 + 6.0 * (double(rng() >> 11) * 0x1.0p-53);
    return x;
  };

  auto run_restart = [&](int slot) {
    detail::RestartResult rr;
    auto objective = [&](const std::vector<double>& x) -> double {
      detail::Decoded d = detail::decode(x, variant, space);
      if (!d.valid) return 1.0 + d.violation;  // minimized value; any rate beats it
      if (space.probe) space.probe(d.params);
      rr.pipeline_evals++;
      ValidatedConfig cfg = validate(device, channel, d.params, variant);
      double rate = keyrate::evaluate(cfg).rate_per_window;
      if (rate > rr.rate || !rr.has_params) {
        rr.rate = rate;
        rr.params = cfg.source();
        rr.has_params = true;
      }
      return -rate;
    };
    detail::NelderMeadResult nm = detail::nelder_mead_min(
        objective, start_for(slot), 0.8, space.max_evals_per_restart, space.spread_tol);
    rr.converged = nm.converged;
    return rr;
  };

  std::vector<detail::RestartResult> results(restarts);
  if (space.jobs > 1) {
    std::vector<std::future<detail::RestartResult>> futures;
    futures.reserve(restarts);
    for (int r = 0; r < restarts; ++r)
      futures.push_back(std::async(std::launch::async, run_restart, r));
    for (int r = 0; r < restarts; ++r) results[r] = futures[r].get();
  } else {
    for (int r = 0; r < restarts; ++r) results[r] = run_restart(r);
  }

  OptimizeOutcome out;
  out.restarts = restarts;
  int best_slot = -1;
  for (int r = 0; r < restarts; ++r) {
    out.evaluations += results[r].pipeline_evals;
    if (results[r].has_params &&
        (best_slot < 0 || results[r].rate > results[best_slot].rate))
      best_slot = r;
  }
  SourceParams best_params = best_slot >= 0
                                 ? results[best_slot].params
                                 : heuristic_start(device, channel, variant, space);
  out.best = keyrate::evaluate(validate(device, channel, best_params, variant));
  out.converged = out.best.rate_per_window > 0.0
                      ? results[best_slot].converged
                      : true;  // no positive rate anywhere: past the distance cutoff
  return out;
}

// One optimization per grid point with L_B = L_A + delta_km, warm-started
// from the previous point's optimum.
inline std::vector<OptimizeOutcome> scan(const DeviceParams& device, Variant variant,
                                         double delta_km, const std::vector<double>& la_grid,
                                         std::uint64_t seed, const SearchSpace& space = {}) {
  if (la_grid.empty()) throw DomainError("scan grid must not be empty");
  std::vector<OptimizeOutcome> out;
  out.reserve(la_grid.size());
  std::optional<SourceParams> warm;
  for (size_t i = 0; i < la_grid.size(); ++i) {
    ChannelPair chan;
    chan.len_a = la_grid[i];
    chan.len_b = la_grid[i] + delta_km;
    OptimizeOutcome o =
        optimize(device, chan, variant, space, derive_seed(seed, 7000 + i), warm);
    if (o.best.rate_per_window > 0.0) warm = o.best.params;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace optimizer
}  // namespace tfqkd
