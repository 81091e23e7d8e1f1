#pragma once

// Key-value run configuration for the command-line tools.
//
// File format: one `key = value` per line; `#` starts a comment; blank lines
// are ignored. Unknown keys are rejected. Every key has a default, listed in
// RunConfig::keys().

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nbp/distance.hpp"
#include "nbp/error.hpp"
#include "nbp/estimate.hpp"
#include "nbp/io.hpp"
#include "nbp/sim.hpp"

namespace nbp {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

class RunConfig {
public:
  static const std::vector<ConfigKey>& keys() {
    static const std::vector<ConfigKey> k{
        {"distance.kind", "mahalanobis", "mahalanobis | dose_penalized"},
        {"caliper.mode", "none", "none | soft | hard"},
        {"caliper.xi", "0.1", "caliper cutoff in (0, 0.5)"},
        {"caliper.M", "auto", "soft-caliper penalty; auto = 1e6 * max finite distance"},
        {"gps.method", "model_based", "none | model_based | kernel | external"},
        {"gps.basis", "spline", "linear | quadratic | spline | knn:<k>"},
        {"gps.bandwidth", "auto", "auto | <bw_z>,<bw_x> (either may be auto)"},
        {"gps.density_table", "", "density-table CSV for gps.method = external"},
        {"estimate.methods", "classic,bc_plugin,bc_regularized", "comma-separated list"},
        {"estimate.alpha", "0.05", "two-sided level of the Wald interval"},
        {"estimate.delta", "0.1", "taper for bc_regularized, in (0, 0.5)"},
        {"estimate.centering", "self_consistent", "self_consistent | as_printed"},
        {"balance.threshold", "0.2", "pass iff max |std diff| is below this"},
        {"sim.setting", "setting1", "setting1 | setting2 | exact"},
        {"sim.n", "300", "units per simulated cohort"},
        {"sim.replicates", "200", "number of replicates"},
        {"sim.seed", "1", "base seed"},
        {"sim.max_attempts", "100", "cohort draws per replicate before giving up"},
        {"sim.noise_sd_convention", "false", "true reads the outcome noise scale 3 as an sd"},
        {"sim.workers", "1", "worker threads"},
        {"io.data", "", "dataset CSV (id,z,y,<covariates>)"},
        {"io.pairs", "", "pairs CSV"},
        {"io.out", "", "output path"},
        {"io.log", "", "match log path; default <out stem>.log.csv"},
        {"io.replicates", "", "per-replicate CSV; default <out stem>_replicates.csv"},
    };
    return k;
  }

  static bool known(std::string_view key) {
    const auto& k = keys();
    return std::any_of(k.begin(), k.end(), [&](const ConfigKey& c) { return c.name == key; });
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Parses `key=value` (spaces around '=' allowed).
  void set_assignment(std::string_view text, const std::string& where = "--set") {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::invalid_argument, where + ": expected key = value, got '" +
                                            std::string(text) + "'");
    }
    set(io::trim(text.substr(0, eq)), io::trim(text.substr(eq + 1)));
  }

  std::string get(std::string_view key) const {
    if (auto it = values_.find(std::string(key)); it != values_.end()) return it->second;
    for (const auto& k : keys()) {
      if (k.name == key) return std::string(k.default_value);
    }
    fail(ErrorKind::invalid_argument, "unknown config key '" + std::string(key) + "'");
  }

  bool is_set(std::string_view key) const { return values_.count(std::string(key)) > 0; }

  double get_double(std::string_view key) const {
    const std::string v = get(key);
    try {
      return io::parse_double(v, std::string(key));
    } catch (const Error&) {
      fail(ErrorKind::invalid_argument, std::string(key) + ": not a number: '" + v + "'");
    }
  }

  std::uint64_t get_uint(std::string_view key) const {
    const std::string v = get(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
      fail(ErrorKind::invalid_argument,
           std::string(key) + ": not a nonnegative integer: '" + v + "'");
    }
    return out;
  }

  bool get_bool(std::string_view key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorKind::invalid_argument, std::string(key) + ": not a boolean: '" + v + "'");
  }

private:
  std::map<std::string, std::string> values_;
};

inline RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (io::trim(line).empty()) continue;
    cfg.set_assignment(line, source + ":" + std::to_string(lineno));
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::invalid_argument, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

// ---------------------------------------------------------------------------
// Typed views

inline DistanceConfig distance_config(const RunConfig& cfg) {
  DistanceConfig d;
  const auto kind = cfg.get("distance.kind");
  if (kind == "mahalanobis") {
    d.kind = DistanceKind::mahalanobis;
  } else if (kind == "dose_penalized") {
    d.kind = DistanceKind::dose_penalized;
  } else {
    fail(ErrorKind::invalid_argument, "distance.kind: unknown value '" + kind + "'");
  }
  const auto mode = cfg.get("caliper.mode");
  if (mode == "none") return d;
  CaliperConfig c;
  if (mode == "soft") {
    c.mode = CaliperMode::soft;
  } else if (mode == "hard") {
    c.mode = CaliperMode::hard;
  } else {
    fail(ErrorKind::invalid_argument, "caliper.mode: unknown value '" + mode + "'");
  }
  c.xi = cfg.get_double("caliper.xi");
  if (cfg.get("caliper.M") != "auto") c.penalty_M = cfg.get_double("caliper.M");
  c.validate();
  d.caliper = c;
  return d;
}

/// gps.method = none yields nullopt.
inline std::optional<sim::GpsConfig> gps_config(const RunConfig& cfg) {
  sim::GpsConfig g;
  const auto method = cfg.get("gps.method");
  if (method == "none") return std::nullopt;
  if (method == "model_based") {
    g.method = GpsMethod::model_based;
  } else if (method == "kernel") {
    g.method = GpsMethod::kernel;
  } else if (method == "external") {
    g.method = GpsMethod::external;
  } else {
    fail(ErrorKind::invalid_argument, "gps.method: unknown value '" + method + "'");
  }

  const auto basis = cfg.get("gps.basis");
  if (basis == "linear") {
    g.squares = false;
    g.hinges = false;
  } else if (basis == "quadratic") {
    g.squares = true;
    g.hinges = false;
  } else if (basis == "spline") {
    g.squares = true;
    g.hinges = true;
  } else if (basis.rfind("knn:", 0) == 0) {
    const std::string k = basis.substr(4);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), v);
    if (k.empty() || ec != std::errc{} || ptr != k.data() + k.size() || v == 0) {
      fail(ErrorKind::invalid_argument, "gps.basis: bad neighbour count in '" + basis + "'");
    }
    g.knn_k = v;
  } else {
    fail(ErrorKind::invalid_argument, "gps.basis: unknown value '" + basis + "'");
  }

  const auto bw = cfg.get("gps.bandwidth");
  if (bw != "auto") {
    const auto parts = io::split(bw);
    if (parts.size() != 2) {
      fail(ErrorKind::invalid_argument, "gps.bandwidth: expected auto or <bw_z>,<bw_x>");
    }
    auto one = [&](const std::string& s) -> std::optional<double> {
      const auto t = io::trim(s);
      if (t == "auto") return std::nullopt;
      double v = 0.0;
      try {
        v = io::parse_double(t, "gps.bandwidth");
      } catch (const Error&) {
        fail(ErrorKind::invalid_argument, "gps.bandwidth: not a number: '" + t + "'");
      }
      if (!(v > 0.0)) fail(ErrorKind::invalid_argument, "gps.bandwidth: must be positive");
      return v;
    };
    g.bw_z = one(parts[0]);
    g.bw_x = one(parts[1]);
  }
  return g;
}

inline std::vector<EstimatorMethod> estimate_methods(const RunConfig& cfg) {
  std::vector<EstimatorMethod> out;
  for (const auto& raw : io::split(cfg.get("estimate.methods"))) {
    const auto name = io::trim(raw);
    if (name.empty()) continue;
    const auto m = parse_method(name);
    if (!m) fail(ErrorKind::invalid_argument, "estimate.methods: unknown method '" + name + "'");
    if (*m == EstimatorMethod::bc_oracle) {
      fail(ErrorKind::invalid_argument,
           "estimate.methods: bc_oracle needs the true dose model and is simulation-only");
    }
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) fail(ErrorKind::invalid_argument, "estimate.methods: empty list");
  return out;
}

inline Centering centering(const RunConfig& cfg) {
  const auto c = cfg.get("estimate.centering");
  if (c == "self_consistent") return Centering::self_consistent;
  if (c == "as_printed") return Centering::as_printed;
  fail(ErrorKind::invalid_argument, "estimate.centering: unknown value '" + c + "'");
}

inline EstimateOptions estimate_options(const RunConfig& cfg, EstimatorMethod m) {
  EstimateOptions o;
  o.method = m;
  o.alpha = cfg.get_double("estimate.alpha");
  o.delta = cfg.get_double("estimate.delta");
  o.centering = centering(cfg);
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) {
    fail(ErrorKind::invalid_argument, "estimate.alpha must lie in (0, 1)");
  }
  if (!(o.delta > 0.0 && o.delta < 0.5)) {
    fail(ErrorKind::invalid_argument, "estimate.delta must lie in (0, 0.5)");
  }
  return o;
}

inline double balance_threshold(const RunConfig& cfg) {
  const double t = cfg.get_double("balance.threshold");
  if (!(t > 0.0)) fail(ErrorKind::invalid_argument, "balance.threshold must be positive");
  return t;
}

inline sim::DgpSpec dgp_spec(const RunConfig& cfg) {
  sim::DgpSpec s;
  const auto setting = cfg.get("sim.setting");
  if (setting == "setting1") {
    s.setting = sim::Setting::setting1;
  } else if (setting == "setting2") {
    s.setting = sim::Setting::setting2;
  } else if (setting == "exact") {
    s.setting = sim::Setting::exact;
  } else {
    fail(ErrorKind::invalid_argument, "sim.setting: unknown value '" + setting + "'");
  }
  s.n_units = cfg.get_uint("sim.n");
  s.seed = cfg.get_uint("sim.seed");
  s.noise = cfg.get_bool("sim.noise_sd_convention") ? sim::NoiseConvention::sd
                                                   : sim::NoiseConvention::variance;
  return s;
}

inline sim::PipelineConfig pipeline_config(const RunConfig& cfg) {
  sim::PipelineConfig p;
  p.distance = distance_config(cfg);
  const auto g = gps_config(cfg);
  p.methods = estimate_methods(cfg);
  p.centering = centering(cfg);
  const auto opt = estimate_options(cfg, EstimatorMethod::classic);
  p.alpha = opt.alpha;
  p.delta = opt.delta;
  p.balance_threshold = balance_threshold(cfg);
  p.max_attempts = cfg.get_uint("sim.max_attempts");
  p.workers = static_cast<unsigned>(std::max<std::uint64_t>(1, cfg.get_uint("sim.workers")));
  if (g) {
    if (g->method == GpsMethod::external) {
      fail(ErrorKind::invalid_argument, "gps.method = external is not available in simulations");
    }
    p.gps = *g;
  } else if (sim::needs_fitted_gps(p)) {
    fail(ErrorKind::invalid_argument,
         "gps.method = none, but a caliper or bias-corrected estimator is configured");
  }
  return p;
}

}  // namespace nbp
