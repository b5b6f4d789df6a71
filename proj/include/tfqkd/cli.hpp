#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfqkd/config.hpp"
#include "tfqkd/keyrate.hpp"
#include "tfqkd/montecarlo.hpp"
#include "tfqkd/optimizer.hpp"
#include "tfqkd/version.hpp"

#ifndef TFQKD_DATA_DIR
#define TFQKD_DATA_DIR "data"
#endif

namespace tfqkd {
namespace cli {

// Provenance block embedded in every emitted data file.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string timestamp;
  std::string version = kVersion;
};

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string manifest_header(const RunManifest& m) {
  std::string overrides;
  for (const auto& [k, v] : m.overrides) {
    if (!overrides.empty()) overrides += " ";
    overrides += k + "=" + v;
  }
  std::string out;
  out += "# tfqkd " + m.version + "\n";
  out += "# command = " + m.command + "\n";
  out += "# config = " + (m.config_path.empty() ? "(defaults)" : m.config_path) + "\n";
  out += "# overrides = " + (overrides.empty() ? "(none)" : overrides) + "\n";
  out += "# seed = " + std::to_string(m.seed) + "\n";
  out += "# out = " + (m.out_path.empty() ? "(stdout)" : m.out_path) + "\n";
  out += "# timestamp = " + m.timestamp + "\n";
  return out;
}

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [k, v] : m.overrides) overrides[k] = v;
  return {{"command", m.command},   {"config", m.config_path}, {"overrides", overrides},
          {"seed", m.seed},         {"out", m.out_path},       {"timestamp", m.timestamp},
          {"version", m.version}};
}

inline nlohmann::json params_json(const SourceParams& s) {
  return {{"sig_a", s.sig_a},   {"sig_b", s.sig_b},   {"dec_a1", s.dec_a1},
          {"dec_a2", s.dec_a2}, {"dec_b1", s.dec_b1}, {"dec_b2", s.dec_b2},
          {"send_a", s.send_a}, {"send_b", s.send_b}, {"pz_a", s.pz_a},
          {"pz_b", s.pz_b},     {"px_a0", s.px_a0},   {"px_a1", s.px_a1},
          {"px_a2", s.px_a2},   {"px_b0", s.px_b0},   {"px_b1", s.px_b1},
          {"px_b2", s.px_b2},   {"slice", s.slice},   {"phase_offset", s.phase_offset}};
}

inline nlohmann::json report_json(const KeyRateReport& r) {
  return {{"key_length", r.key_length},
          {"rate_per_window", r.rate_per_window},
          {"n1", r.n1},
          {"e1ph", r.e1ph},
          {"n_t", r.n_t},
          {"e_z", r.e_z},
          {"plob", r.plob},
          {"tgw", r.tgw},
          {"variant", std::string(to_string(r.variant))},
          {"params", params_json(r.params)}};
}

inline void print_report(std::ostream& os, const KeyRateReport& r) {
  os << "variant = " << to_string(r.variant) << "\n";
  os << "rate_per_window = " << format_double(r.rate_per_window) << "\n";
  os << "key_length = " << format_double(r.key_length) << "\n";
  os << "n1 = " << format_double(r.n1) << "\n";
  os << "e1ph = " << format_double(r.e1ph) << "\n";
  os << "n_t = " << format_double(r.n_t) << "\n";
  os << "e_z = " << format_double(r.e_z) << "\n";
  os << "plob = " << format_double(r.plob) << "\n";
  os << "tgw = " << format_double(r.tgw) << "\n";
}

// Options shared by every subcommand: config source, overrides, seed, output
// path, worker limit, optimizer effort.
struct CommonOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::uint64_t seed = 1;
  std::string out_path;
  int jobs = 1;
  int restarts = 8;
  int evals = 2000;
};

namespace detail {

inline void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path,
                  "configuration file (flat name = value lines); defaults to $TFQKD_CONFIG");
  sub->add_option("--seed", o.seed, "RNG seed (results are deterministic per seed)");
  sub->add_option("--out", o.out_path, "output file path");
  sub->add_option("--jobs", o.jobs, "max concurrent workers");
  sub->add_option("--restarts", o.restarts, "optimizer restarts per point");
  sub->add_option("--evals", o.evals, "objective evaluations per restart");

  RawConfig probe;  // only used to enumerate the override names
  for (auto& f : tfqkd::detail::numeric_fields(probe)) {
    std::string name = f.name;
    sub->add_option(
        "--" + name,
        [&o, name](const CLI::results_t& res) {
          o.overrides.emplace_back(name, res.at(0));
          return true;
        },
        "override config key " + name);
  }
  sub->add_option(
      "--kind",
      [&o](const CLI::results_t& res) {
        o.overrides.emplace_back("kind", res.at(0));
        return true;
      },
      "override protocol variant (original|modified|general)");
}

inline RawConfig load_config(const CommonOpts& o) {
  std::string path = o.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("TFQKD_CONFIG")) path = env;
  }
  RawConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  for (const auto& [k, v] : o.overrides) apply_setting(cfg, k, v);
  return cfg;
}

inline RunManifest make_manifest(const std::string& command, const CommonOpts& o) {
  RunManifest m;
  m.command = command;
  m.config_path = o.config_path;
  m.overrides = o.overrides;
  m.seed = o.seed;
  m.out_path = o.out_path;
  m.timestamp = utc_timestamp();
  return m;
}

inline void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write output file '" + path + "'");
  out << content;
}

inline SearchSpace make_space(const CommonOpts& o) {
  SearchSpace sp;
  sp.restarts = o.restarts;
  sp.max_evals_per_restart = o.evals;
  sp.jobs = 1;  // parallelism is applied across cells/variants, not restarts
  return sp;
}

inline const char* kCsvHeader = "la_km,lb_km,variant,rate,key_length,n1,e1ph,ez,plob,tgw";

inline std::string csv_row(double la, double lb, Variant v, const KeyRateReport& r) {
  std::string row;
  row += format_double(la) + "," + format_double(lb) + "," + std::string(to_string(v)) + ",";
  row += format_double(r.rate_per_window) + "," + format_double(r.key_length) + ",";
  row += format_double(r.n1) + "," + format_double(r.e1ph) + "," + format_double(r.e_z) + ",";
  row += format_double(r.plob) + "," + format_double(r.tgw);
  return row;
}

inline std::vector<Variant> parse_variants(const std::string& which) {
  if (which == "all")
    return {Variant::general, Variant::modified, Variant::original};
  return {variant_from_string(which)};
}

// Bounded-concurrency deterministic map: results land in input order.
template <class Fn>
inline void parallel_for(int jobs, int count, const Fn& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> running;
  int next = 0;
  while (next < count || !running.empty()) {
    while (next < count && static_cast<int>(running.size()) < jobs)
      running.push_back(std::async(std::launch::async, fn, next++));
    running.front().get();
    running.erase(running.begin());
  }
}

}  // namespace detail

// --- rate -------------------------------------------------------------------

inline int cmd_rate(const CommonOpts& opts) {
  RawConfig raw = detail::load_config(opts);
  ValidatedConfig cfg = raw.validated();
  KeyRateReport rep = keyrate::evaluate(cfg);
  print_report(std::cout, rep);
  if (!opts.out_path.empty()) {
    RunManifest m = detail::make_manifest("rate", opts);
    nlohmann::json j = {{"manifest", manifest_json(m)}, {"report", report_json(rep)}};
    detail::write_output(opts.out_path, j.dump(2) + "\n");
  }
  return 0;
}

// --- optimize ----------------------------------------------------------------

inline int cmd_optimize(const CommonOpts& opts, const std::string& variant_flag,
                        const std::string& emit_config_path) {
  RawConfig raw = detail::load_config(opts);
  Variant variant = variant_flag.empty() ? raw.variant : variant_from_string(variant_flag);
  SearchSpace space = detail::make_space(opts);
  space.jobs = opts.jobs;
  OptimizeOutcome out =
      optimizer::optimize(raw.device, raw.channel, variant, space, opts.seed);
  print_report(std::cout, out.best);
  std::cout << "evaluations = " << out.evaluations << "\n";
  std::cout << "restarts = " << out.restarts << "\n";
  std::cout << "converged = " << (out.converged ? "true" : "false") << "\n";
  if (!opts.out_path.empty()) {
    RunManifest m = detail::make_manifest("optimize", opts);
    nlohmann::json j = {{"manifest", manifest_json(m)},
                        {"report", report_json(out.best)},
                        {"evaluations", out.evaluations},
                        {"restarts", out.restarts},
                        {"converged", out.converged}};
    detail::write_output(opts.out_path, j.dump(2) + "\n");
  }
  if (!emit_config_path.empty()) {
    RawConfig best = raw;
    best.source = out.best.params;
    best.variant = variant;
    detail::write_output(emit_config_path, serialize_config(best));
  }
  return 0;
}

// --- scan --------------------------------------------------------------------

inline int cmd_scan(const CommonOpts& opts, double delta_km, double la_from, double la_to,
                    double la_step, const std::string& variant_flag) {
  if (!(la_step > 0) || la_from > la_to || delta_km < 0)
    throw DomainError("empty or malformed scan grid: need la_from <= la_to, la_step > 0, "
                      "delta_km >= 0");
  RawConfig raw = detail::load_config(opts);
  std::vector<double> grid;
  for (double la = la_from; la <= la_to + 1e-9; la += la_step) grid.push_back(la);
  std::vector<Variant> variants = detail::parse_variants(variant_flag);

  std::vector<std::vector<OptimizeOutcome>> per_variant(variants.size());
  detail::parallel_for(opts.jobs, static_cast<int>(variants.size()), [&](int vi) {
    per_variant[vi] = optimizer::scan(raw.device, variants[vi], delta_km, grid,
                                      derive_seed(opts.seed, 40 + vi),
                                      detail::make_space(opts));
  });

  RunManifest m = detail::make_manifest("scan", opts);
  std::string out = manifest_header(m);
  out += std::string(detail::kCsvHeader) + "\n";
  for (size_t i = 0; i < grid.size(); ++i)
    for (size_t vi = 0; vi < variants.size(); ++vi)
      out += detail::csv_row(grid[i], grid[i] + delta_km, variants[vi],
                             per_variant[vi][i].best) +
             "\n";
  detail::write_output(opts.out_path, out);
  return 0;
}

// --- table2 ------------------------------------------------------------------

struct ReferenceRates {
  // key: (la, lb, variant name)
  std::map<std::tuple<double, double, std::string>, double> rates;
};

inline ReferenceRates load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open reference rate file '" + path + "'");
  ReferenceRates ref;
  std::string line;
  while (std::getline(in, line)) {
    if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (line.find("la_km") != std::string::npos) continue;  // header
    std::stringstream ss(line);
    std::string la, lb, variant, rate;
    if (!std::getline(ss, la, ',') || !std::getline(ss, lb, ',') ||
        !std::getline(ss, variant, ',') || !std::getline(ss, rate, ','))
      throw ParseError("malformed reference row: " + line);
    ref.rates[{std::stod(la), std::stod(lb), variant}] = std::stod(rate);
  }
  return ref;
}

inline const std::vector<std::pair<double, double>>& table2_cells() {
  static const std::vector<std::pair<double, double>> cells = {
      {0, 50}, {150, 200}, {250, 300}, {0, 100}, {100, 200}, {200, 300}};
  return cells;
}

inline int cmd_table2(const CommonOpts& opts, const std::string& reference_path) {
  RawConfig raw = detail::load_config(opts);
  ReferenceRates ref = load_reference(
      reference_path.empty() ? std::string(TFQKD_DATA_DIR) + "/table2_reference.csv"
                             : reference_path);

  const auto& cells = table2_cells();
  std::vector<Variant> variants = {Variant::general, Variant::modified, Variant::original};
  const int count = static_cast<int>(cells.size() * variants.size());
  std::vector<OptimizeOutcome> outcomes(count);
  detail::parallel_for(opts.jobs, count, [&](int idx) {
    auto [la, lb] = cells[idx / variants.size()];
    Variant v = variants[idx % variants.size()];
    ChannelPair chan;
    chan.len_a = la;
    chan.len_b = lb;
    outcomes[idx] = optimizer::optimize(raw.device, chan, v, detail::make_space(opts),
                                        derive_seed(opts.seed, 80 + idx));
  });

  RunManifest m = detail::make_manifest("table2", opts);
  std::string out = manifest_header(m);
  out += std::string(detail::kCsvHeader) + ",reference_rate,rel_deviation\n";
  for (int idx = 0; idx < count; ++idx) {
    auto [la, lb] = cells[idx / variants.size()];
    Variant v = variants[idx % variants.size()];
    double rate = outcomes[idx].best.rate_per_window;
    double refrate = 0;
    auto it = ref.rates.find({la, lb, std::string(to_string(v))});
    if (it != ref.rates.end()) refrate = it->second;
    double dev = refrate != 0 ? (rate - refrate) / refrate
                              : (rate == 0 ? 0.0 : std::numeric_limits<double>::infinity());
    out += detail::csv_row(la, lb, v, outcomes[idx].best) + "," + format_double(refrate) +
           "," + format_double(dev) + "\n";
  }
  detail::write_output(opts.out_path, out);
  return 0;
}

// --- verify ------------------------------------------------------------------

inline int cmd_verify(const CommonOpts& opts, std::uint64_t samples,
                      const std::string& inject_fault) {
  if (samples < 100000)
    throw DomainError("verify needs --samples >= 1e5 per stratum");
  RawConfig raw = detail::load_config(opts);
  ValidatedConfig cfg = raw.validated();

  std::optional<DeviceParams> corrupted;
  if (!inject_fault.empty()) {
    if (inject_fault == "dark_rate") {
      DeviceParams dev = raw.device;
      dev.dark_rate = dev.dark_rate * 1000.0 + 1e-5;
      corrupted = dev;
    } else {
      throw DomainError("unknown fault '" + inject_fault + "' (supported: dark_rate)");
    }
  }

  auto gates = montecarlo::oracle_gates(cfg, samples, opts.seed,
                                        corrupted ? &*corrupted : nullptr, opts.jobs);
  bool all_pass = true;
  std::vector<std::string> failed;
  for (const auto& g : gates) {
    std::cout << (g.pass ? "PASS" : "FAIL") << " " << g.name
              << " analytic=" << format_double(g.analytic)
              << " empirical=" << format_double(g.empirical)
              << " 3sigma=" << format_double(3.0 * g.sigma) << " n=" << g.n << "\n";
    if (!g.pass) {
      all_pass = false;
      failed.push_back(g.name);
    }
  }
  if (!all_pass) {
    std::cerr << "verify failed:";
    for (const auto& n : failed) std::cerr << " " << n;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

// --- entry point --------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"sending-or-not-sending twin-field QKD key rates: evaluation, "
               "optimization, scans, and Monte Carlo verification"};
  app.require_subcommand(1);

  CommonOpts rate_opts, scan_opts, table_opts, opt_opts, verify_opts;

  auto* rate = app.add_subcommand("rate", "evaluate the key rate of one configuration");
  detail::add_common(rate, rate_opts);

  auto* scan = app.add_subcommand("scan", "optimized key rate over a distance grid");
  detail::add_common(scan, scan_opts);
  double delta_km = 50, la_from = 0, la_to = 0, la_step = 10;
  std::string scan_variant = "all";
  scan->add_option("--delta-km", delta_km, "L_B - L_A in km");
  scan->add_option("--la-from", la_from, "first L_A in km");
  scan->add_option("--la-to", la_to, "last L_A in km");
  scan->add_option("--la-step", la_step, "grid step in km");
  scan->add_option("--variant", scan_variant, "original|modified|general|all");

  auto* table2 = app.add_subcommand(
      "table2", "optimize the six benchmark cells for all three variants");
  detail::add_common(table2, table_opts);
  std::string reference_path;
  table2->add_option("--reference", reference_path, "reference rate CSV");

  auto* optimize = app.add_subcommand("optimize", "optimize source parameters in place");
  detail::add_common(optimize, opt_opts);
  std::string opt_variant, emit_config;
  optimize->add_option("--variant", opt_variant, "original|modified|general");
  optimize->add_option("--emit-config", emit_config, "write the optimized configuration here");

  auto* verify = app.add_subcommand("verify", "Monte Carlo oracle check of the analytic rates");
  detail::add_common(verify, verify_opts);
  std::uint64_t samples = 10000000;
  std::string inject_fault;
  verify->add_option("--samples", samples, "windows simulated per setting stratum");
  verify->add_option("--inject-fault", inject_fault, "corrupt the analytic path (test hook)")
      ->group("");

  int rc = 0;
  rate->callback([&] { rc = cmd_rate(rate_opts); });
  scan->callback(
      [&] { rc = cmd_scan(scan_opts, delta_km, la_from, la_to, la_step, scan_variant); });
  table2->callback([&] { rc = cmd_table2(table_opts, reference_path); });
  optimize->callback([&] { rc = cmd_optimize(opt_opts, opt_variant, emit_config); });
  verify->callback([&] { rc = cmd_verify(verify_opts, samples, inject_fault); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("tfqkd");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cli
}  // namespace tfqkd
