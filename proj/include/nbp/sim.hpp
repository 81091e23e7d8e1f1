#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "nbp/balance.hpp"
#include "nbp/core.hpp"
#include "nbp/estimate.hpp"
#include "nbp/gps.hpp"
#include "nbp/matcher.hpp"

namespace nbp::sim {

// `exact` duplicates every covariate vector across a pair of units, so
// optimal matching is exact and within-pair assignment is a fair coin.
enum class Setting { setting1, setting2, exact };

// How the outcome noise scale "N(0, 3)" is read.
enum class NoiseConvention { variance, sd };

struct DgpSpec {
  Setting setting = Setting::setting1;
  std::size_t n_units = 300;
  std::uint64_t seed = 1;
  NoiseConvention noise = NoiseConvention::variance;
};

/// Y_n(z) = intercept_n + slope_n * z. Both simulation designs are linear in
/// the dose, and the unit's outcome noise is folded into the intercept once.
struct PotentialOutcomes {
  std::vector<double> intercept;
  std::vector<double> slope;

  double operator()(std::size_t unit, double z) const { return intercept[unit] + slope[unit] * z; }
};

struct GeneratedCohort {
  std::shared_ptr<const Cohort> cohort;
  PotentialOutcomes po;
  /// True E[Z | x]; the dose noise is standard normal in every design.
  std::function<double(std::span<const double>)> true_mean;
};

/// Stream for replicate r, regeneration attempt a.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                    static_cast<std::uint32_t>(attempt), static_cast<std::uint32_t>(attempt >> 32)};
  return std::mt19937_64(seq);
}

inline double setting1_mean(std::span<const double> x) {
  return x[0] + x[1] * x[1] + std::abs(x[2] * x[3]) + (x[3] > 0.0 ? 1.0 : 0.0) +
         std::log(1.0 + std::abs(x[4]));
}

inline double setting2_mean(std::span<const double> x) {
  const bool x1 = x[0] == 1.0;
  const double s5 = std::sin(x[4]);
  return (x1 && x[1] > 5.0 ? 5.0 : 0.0) - x[0] + x[2] + s5 * s5 + 2.0 * std::log(1.0 + x[3]) +
         2.0 * std::exp(-std::abs(x[5]));
}

inline double exact_mean(std::span<const double> x) { return x[0] + x[1] * x[1] + 0.5 * x[2]; }

inline double setting1_slope(std::span<const double> x) {
  return 1.0 + 0.3 * x[0] + 0.2 * x[2] * x[2] * x[2];
}

inline double setting2_slope(std::span<const double> x) {
  return 1.0 + 0.7 * x[5] + 2.0 * x[4] * x[4] * x[4];
}

inline GeneratedCohort generate_cohort(const DgpSpec& spec, std::mt19937_64& rng) {
  if (spec.n_units < 4) fail(ErrorKind::invalid_argument, "simulation needs at least 4 units");
  if (spec.setting == Setting::exact && spec.n_units % 2 != 0) {
    fail(ErrorKind::invalid_argument, "the exact-matching design needs an even number of units");
  }
  const double y_sd = spec.noise == NoiseConvention::variance ? std::sqrt(3.0) : 3.0;
  std::normal_distribution<double> std_normal(0.0, 1.0);

  GeneratedCohort out;
  std::vector<Unit> units;
  std::vector<std::string> names;
  const std::size_t n = spec.n_units;
  out.po.intercept.resize(n);
  out.po.slope.resize(n);

  auto add_unit = [&](std::size_t i, std::vector<double> x, double mean, double slope,
                      double base) {
    const double z = mean + std_normal(rng);
    const double intercept = base + y_sd * std_normal(rng);
    out.po.intercept[i] = intercept;
    out.po.slope[i] = slope;
    units.push_back({std::to_string(i + 1), z, intercept + slope * z, std::move(x)});
  };

  switch (spec.setting) {
    case Setting::setting1: {
      names = {"x1", "x2", "x3", "x4", "x5"};
      out.true_mean = setting1_mean;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(5);
        for (double& v : x) v = std_normal(rng);
        const double base = std::exp(std::abs(x[1] - x[3])) - std::sin(x[4]);
        add_unit(i, x, setting1_mean(x), setting1_slope(x), base);
      }
      break;
    }
    case Setting::setting2: {
      names = {"x1", "x2", "x3", "x4", "x5", "x6"};
      out.true_mean = setting2_mean;
      std::bernoulli_distribution bern(0.5);
      std::binomial_distribution<int> binom(10, 0.75);
      std::poisson_distribution<int> pois(1.5);
      std::uniform_real_distribution<double> u4(0.0, 3.0);
      std::uniform_real_distribution<double> u5(-1.0, 1.0);
      std::uniform_real_distribution<double> u6(-5.0, 5.0);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(6);
        x[0] = bern(rng) ? 1.0 : 0.0;
        x[1] = binom(rng);
        x[2] = pois(rng);
        x[3] = u4(rng);
        x[4] = u5(rng);
        x[5] = u6(rng);
        const double base = x[2] * (x[0] == 1.0 ? 2.0 * x[3] + 1.0 : 1.0) +
                            0.5 * x[3] * std::abs(x[4]) + x[1];
        add_unit(i, x, setting2_mean(x), setting2_slope(x), base);
      }
      break;
    }
    case Setting::exact: {
      names = {"x1", "x2", "x3"};
      out.true_mean = exact_mean;
      for (std::size_t i = 0; i < n; i += 2) {
        std::vector<double> x(3);
        for (double& v : x) v = std_normal(rng);
        const double slope = 1.0 + 0.5 * x[0] + 0.3 * x[2] * x[2];
        const double base = std::exp(std::abs(x[1])) - x[2];
        add_unit(i, x, exact_mean(x), slope, base);
        add_unit(i + 1, x, exact_mean(x), slope, base);
      }
      break;
    }
  }
  out.cohort = std::make_shared<const Cohort>(std::move(units), std::move(names));
  return out;
}

inline GeneratedCohort generate_cohort(const DgpSpec& spec) {
  auto rng = stream(spec.seed, 0, 0);
  return generate_cohort(spec, rng);
}

/// Effect ratio of the matched set under the known potential outcomes.
inline double true_effect_ratio(const MatchedPairSet& set, const PotentialOutcomes& po) {
  double num = 0.0;
  double gaps = 0.0;
  for (const auto& p : set.pairs) {
    num += po(p.high, p.z_dblstar) - po(p.high, p.z_star);
    num += po(p.low, p.z_dblstar) - po(p.low, p.z_star);
    gaps += p.gap();
  }
  return num / (2.0 * gaps);
}

// ---------------------------------------------------------------------------

struct GpsConfig {
  GpsMethod method = GpsMethod::model_based;
  // model-based basis; knn_k > 0 swaps least squares for a k-NN mean
  bool squares = true;
  bool hinges = true;
  std::size_t knn_k = 0;
  // kernel bandwidths; unset uses the default rule
  std::optional<double> bw_z;
  std::optional<double> bw_x;
};

inline GpsModel fit_gps(const Cohort& cohort, const GpsConfig& cfg) {
  switch (cfg.method) {
    case GpsMethod::model_based:
      if (cfg.knn_k > 0) return fit_model_based(cohort, KnnRegressor(cfg.knn_k));
      return fit_model_based(cohort, LeastSquaresRegressor(cfg.squares, cfg.hinges));
    case GpsMethod::kernel:
      return fit_kernel(cohort, cfg.bw_z, cfg.bw_x);
    case GpsMethod::external:
      break;
  }
  fail(ErrorKind::invalid_argument, "external density tables cannot be fitted inside a simulation");
}

struct PipelineConfig {
  DistanceConfig distance;
  GpsConfig gps;
  std::vector<EstimatorMethod> methods{EstimatorMethod::classic, EstimatorMethod::bc_regularized};
  double alpha = 0.05;
  double delta = 0.1;
  Centering centering = Centering::self_consistent;
  double balance_threshold = 0.2;
  std::size_t max_attempts = 100;
  unsigned workers = 1;
};

struct SimReplicateResult {
  std::size_t replicate = 0;
  double true_lambda = 0.0;
  std::vector<EstimateReport> estimates;  // one per configured method, in order
  std::size_t balance_attempts = 0;
  std::size_t n_pairs = 0;
  double max_abs_std_diff = 0.0;
};

struct MethodSummary {
  EstimatorMethod method;
  double mae = 0.0;
  double rmse = 0.0;
  double mcil = 0.0;
  double cr = 0.0;
};

struct SimSummary {
  std::vector<MethodSummary> methods;
  std::size_t n_replicates = 0;
};

struct SimRun {
  SimSummary summary;
  std::vector<SimReplicateResult> replicates;
};

inline bool needs_fitted_gps(const PipelineConfig& cfg) {
  if (cfg.distance.caliper) return true;
  for (auto m : cfg.methods) {
    if (m == EstimatorMethod::bc_plugin || m == EstimatorMethod::bc_regularized) return true;
  }
  return false;
}

/// One replicate: draw, match and check balance, regenerating on failure;
/// then evaluate every configured estimator against the true effect ratio.
inline SimReplicateResult run_replicate(const DgpSpec& spec, const PipelineConfig& cfg,
                                        std::size_t r) {
  for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    auto rng = stream(spec.seed, r, attempt);
    const GeneratedCohort gen = generate_cohort(spec, rng);

    std::optional<GpsModel> fitted;
    if (needs_fitted_gps(cfg)) fitted = fit_gps(*gen.cohort, cfg.gps);

    const auto match = match_cohort(gen.cohort, cfg.distance, fitted ? &*fitted : nullptr);
    const MatchedPairSet& set = match.pairs.set;
    if (set.size() < 2) continue;
    const auto bal = balance_report(set, cfg.balance_threshold);
    if (!bal.pass) continue;

    SimReplicateResult res;
    res.replicate = r;
    res.balance_attempts = attempt + 1;
    res.n_pairs = set.size();
    res.max_abs_std_diff = bal.max_abs_std_diff;
    res.true_lambda = true_effect_ratio(set, gen.po);

    std::vector<double> oracle_p;
    for (auto m : cfg.methods) {
      if (m == EstimatorMethod::bc_oracle && oracle_p.empty()) {
        const auto truth = GpsModel::model_based(gen.true_mean, 1.0);
        for (std::size_t i = 0; i < set.size(); ++i) {
          oracle_p.push_back(pair_probability(truth, set.high(i), set.low(i)).p_high_first);
        }
      }
      EstimateOptions opt{m, cfg.alpha, cfg.delta, cfg.centering};
      res.estimates.push_back(estimate_report(set, fitted ? &*fitted : nullptr, opt, oracle_p));
    }
    return res;
  }
  fail(ErrorKind::data, "replicate " + std::to_string(r) + ": balance criterion not met within " +
                            std::to_string(cfg.max_attempts) + " attempts");
}

inline SimSummary summarize(const std::vector<SimReplicateResult>& reps,
                            const std::vector<EstimatorMethod>& methods) {
  SimSummary s;
  s.n_replicates = reps.size();
  const double nr = static_cast<double>(reps.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodSummary ms{methods[m]};
    for (const auto& r : reps) {
      const auto& e = r.estimates[m];
      const double err = e.estimate - r.true_lambda;
      ms.mae += std::abs(err);
      ms.rmse += err * err;
      ms.mcil += e.ci_length();
      ms.cr += e.covers(r.true_lambda) ? 1.0 : 0.0;
    }
    if (nr > 0) {
      ms.mae /= nr;
      ms.rmse = std::sqrt(ms.rmse / nr);
      ms.mcil /= nr;
      ms.cr /= nr;
    }
    s.methods.push_back(ms);
  }
  return s;
}

/// Runs replicates 0..n-1, optionally across worker threads. Results are
/// folded in replicate order, so the output does not depend on `workers`.
inline SimRun run_replicates(const DgpSpec& spec, const PipelineConfig& cfg,
                             std::size_t n_replicates) {
  if (n_replicates < 1) fail(ErrorKind::invalid_argument, "need at least one replicate");
  if (cfg.methods.empty()) fail(ErrorKind::invalid_argument, "no estimators configured");

  std::vector<SimReplicateResult> reps(n_replicates);
  std::vector<std::exception_ptr> errors(n_replicates);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t r = next++; r < n_replicates; r = next++) {
      try {
        reps[r] = run_replicate(spec, cfg, r);
      } catch (...) {
        errors[r] = std::current_exception();
        next = n_replicates;
      }
    }
  };
  const unsigned workers = std::max(1u, cfg.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  SimRun run;
  run.summary = summarize(reps, cfg.methods);
  run.replicates = std::move(reps);
  return run;
}

}  // namespace nbp::sim
