#pragma once

// The four command-line workflows. Each returns a process exit code and
// writes diagnostics to `err`:
//   0 success, 1 usage/config error, 2 balance failure (balance only),
//   3 infeasible matching, 4 data error.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nbp/balance.hpp"
#include "nbp/config.hpp"
#include "nbp/estimate.hpp"
#include "nbp/gps.hpp"
#include "nbp/io.hpp"
#include "nbp/matcher.hpp"
#include "nbp/sim.hpp"

namespace nbp {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_balance_fail = 2,
  exit_infeasible = 3,
  exit_data = 4,
};

namespace detail {

inline std::filesystem::path required_path(const RunConfig& cfg, std::string_view key) {
  const auto v = cfg.get(key);
  if (v.empty()) fail(ErrorKind::invalid_argument, std::string(key) + " is not set");
  return v;
}

inline std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  auto p = out;
  p.replace_filename(out.stem().string() + suffix);
  return p;
}

inline std::optional<GpsModel> load_gps(const RunConfig& cfg,
                                        const std::shared_ptr<const Cohort>& cohort) {
  const auto g = gps_config(cfg);
  if (!g) return std::nullopt;
  if (g->method == GpsMethod::external) {
    const auto table = io::read_density_table(required_path(cfg, "gps.density_table"), *cohort);
    return load_external(cohort, table);
  }
  return sim::fit_gps(*cohort, *g);
}

inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const InfeasibleMatching& e) {
    err << "error: " << e.what()
        << "\nhint: raise caliper.xi or set caliper.mode = soft\n";
    return exit_infeasible;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::invalid_argument ? exit_usage : exit_data;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
}

}  // namespace detail

/// Reads io.data, writes matched pairs to io.out and a one-row log to io.log.
inline int cmd_match(const RunConfig& cfg, std::ostream& err) {
  return detail::guarded(err, [&]() {
    const auto dcfg = distance_config(cfg);
    const auto out = detail::required_path(cfg, "io.out");
    const auto cohort = io::read_dataset(detail::required_path(cfg, "io.data"));
    const auto gps = detail::load_gps(cfg, cohort);
    if (dcfg.caliper && !gps) {
      fail(ErrorKind::invalid_argument, "a caliper needs gps.method other than none");
    }
    const auto res = match_cohort(cohort, dcfg, gps ? &*gps : nullptr);
    const auto& set = res.pairs.set;

    std::vector<double> p_high;
    if (gps) {
      for (std::size_t i = 0; i < set.size(); ++i) {
        p_high.push_back(pair_probability(*gps, set.high(i), set.low(i)).p_high_first);
      }
    }

    std::ostringstream log;
    log << "total_cost,n_pairs,excluded,caliper_mode,forbidden_edges,dropped_pairs\n";
    log << io::format_double(res.solution.total_cost) << ',' << set.size() << ',';
    for (std::size_t i = 0; i < res.solution.excluded_nodes.size(); ++i) {
      log << (i ? ";" : "") << (*cohort)[res.solution.excluded_nodes[i]].id;
    }
    log << ',' << cfg.get("caliper.mode") << ',' << res.problem.forbidden_edge_count() << ',';
    for (std::size_t i = 0; i < res.pairs.dropped.size(); ++i) {
      const auto [a, b] = res.pairs.dropped[i];
      log << (i ? ";" : "") << (*cohort)[a].id << '|' << (*cohort)[b].id;
    }
    log << '\n';

    const std::string log_key = cfg.get("io.log");
    const auto log_path = log_key.empty() ? detail::sibling(out, ".log.csv")
                                          : std::filesystem::path(log_key);
    io::write_atomic(out, io::pairs_csv(set, p_high));
    io::write_atomic(log_path, log.str());
    return int{exit_ok};
  });
}

/// Reads io.data and io.pairs and writes one report row per configured method.
inline int cmd_estimate(const RunConfig& cfg, std::ostream& err) {
  return detail::guarded(err, [&]() {
    const auto methods = estimate_methods(cfg);
    std::vector<EstimateOptions> opts;
    for (auto m : methods) opts.push_back(estimate_options(cfg, m));
    const auto out = detail::required_path(cfg, "io.out");
    const auto cohort = io::read_dataset(detail::required_path(cfg, "io.data"));
    const auto set = io::read_pairs(detail::required_path(cfg, "io.pairs"), cohort);

    bool need_gps = false;
    for (auto m : methods) need_gps |= m != EstimatorMethod::classic;
    std::optional<GpsModel> gps;
    if (need_gps) {
      gps = detail::load_gps(cfg, cohort);
      if (!gps) {
        fail(ErrorKind::invalid_argument, "bias-corrected methods need gps.method other than none");
      }
    }
    std::vector<EstimateReport> reports;
    for (const auto& o : opts) reports.push_back(estimate_report(set, gps ? &*gps : nullptr, o));
    io::write_atomic(out, io::report_csv(reports));
    return int{exit_ok};
  });
}

/// Reads io.data and io.pairs and writes the balance table; exit 2 on failure.
inline int cmd_balance(const RunConfig& cfg, std::ostream& err) {
  return detail::guarded(err, [&]() {
    const double threshold = balance_threshold(cfg);
    const auto out = detail::required_path(cfg, "io.out");
    const auto cohort = io::read_dataset(detail::required_path(cfg, "io.data"));
    const auto set = io::read_pairs(detail::required_path(cfg, "io.pairs"), cohort);
    const auto rep = balance_report(set, threshold);
    io::write_atomic(out, io::balance_csv(rep));
    if (!rep.pass) {
      err << "balance: max |std diff| " << io::format_double(rep.max_abs_std_diff)
          << " is not below " << io::format_double(threshold) << '\n';
      return int{exit_balance_fail};
    }
    return int{exit_ok};
  });
}

/// Runs the Monte Carlo sweep and writes the summary to io.out and the
/// per-replicate rows to io.replicates. Nothing is written on failure.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& err) {
  return detail::guarded(err, [&]() {
    const auto spec = dgp_spec(cfg);
    const auto pipe = pipeline_config(cfg);
    const auto n_reps = cfg.get_uint("sim.replicates");
    const auto out = detail::required_path(cfg, "io.out");
    const std::string rep_key = cfg.get("io.replicates");
    const auto rep_path = rep_key.empty() ? detail::sibling(out, "_replicates.csv")
                                          : std::filesystem::path(rep_key);
    const auto run = sim::run_replicates(spec, pipe, n_reps);
    io::write_atomic(rep_path, io::replicates_csv(run.replicates, pipe.methods));
    io::write_atomic(out, io::summary_csv(run.summary));
    return int{exit_ok};
  });
}

}  // namespace nbp
