#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "nbp/core.hpp"
#include "nbp/gps.hpp"

namespace nbp {

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc, which brings it to full double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    fail(ErrorKind::invalid_argument, "normal_quantile: p must lie in [0, 1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// Per-pair ingredients of the estimators. p_high is the probability that the
/// unit which actually received the higher dose did so.
struct PairObservation {
  double y_high = 0.0;
  double y_low = 0.0;
  double gap = 0.0;
  double p_high = 0.5;
  double p_high_tapered = 0.5;

  double diff() const noexcept { return y_high - y_low; }
};

enum class EstimatorMethod { classic, bc_oracle, bc_plugin, bc_regularized };
enum class Centering { as_printed, self_consistent };

inline std::string_view to_string(EstimatorMethod m) {
  switch (m) {
    case EstimatorMethod::classic: return "classic";
    case EstimatorMethod::bc_oracle: return "bc_oracle";
    case EstimatorMethod::bc_plugin: return "bc_plugin";
    case EstimatorMethod::bc_regularized: return "bc_regularized";
  }
  return "?";
}

inline std::optional<EstimatorMethod> parse_method(std::string_view s) {
  for (auto m : {EstimatorMethod::classic, EstimatorMethod::bc_oracle, EstimatorMethod::bc_plugin,
                 EstimatorMethod::bc_regularized}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

inline std::string_view to_string(Centering c) {
  return c == Centering::as_printed ? "as_printed" : "self_consistent";
}

struct EstimateReport {
  double estimate = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  EstimatorMethod method = EstimatorMethod::classic;
  Centering centering = Centering::self_consistent;

  bool covers(double value) const { return ci_low <= value && value <= ci_high; }
  double ci_length() const { return ci_high - ci_low; }
};

namespace detail {

inline double gap_sum(std::span<const PairObservation> pairs) {
  double s = 0.0;
  for (const auto& p : pairs) s += p.gap;
  return s;
}

// Inverse-probability weight for the observed higher-dose unit. With
// `taper_delta` set, the weight follows the three p-strata of the regularized
// variance: below delta -> 1/delta, above 1-delta -> 1/(1-delta).
inline double ip_weight(const PairObservation& p, std::optional<double> taper_delta) {
  const double prob = taper_delta ? taper(p.p_high, *taper_delta) : p.p_high;
  return 1.0 / prob;
}

}  // namespace detail

/// Sum of observed high-minus-low differences over the sum of dose gaps.
inline double classic_neyman(std::span<const PairObservation> pairs) {
  if (pairs.empty()) fail(ErrorKind::invalid_argument, "classic_neyman: no pairs");
  double num = 0.0;
  for (const auto& p : pairs) num += p.diff();
  return num / detail::gap_sum(pairs);
}

/// Inverse-probability weighted differences over twice the gap sum. The
/// weights come from p_high, or from p_high_tapered when `use_taper` is set.
inline double bc_neyman(std::span<const PairObservation> pairs, bool use_taper) {
  if (pairs.empty()) fail(ErrorKind::invalid_argument, "bc_neyman: no pairs");
  double num = 0.0;
  for (const auto& p : pairs) {
    const double prob = use_taper ? p.p_high_tapered : p.p_high;
    if (!(prob > 0.0)) {
      fail(ErrorKind::degenerate, "bc_neyman: zero assignment probability (use the taper)");
    }
    num += p.diff() / prob;
  }
  return num / (2.0 * detail::gap_sum(pairs));
}

inline double classic_variance(std::span<const PairObservation> pairs, double lambda_hat) {
  const std::size_t count = pairs.size();
  if (count < 2) fail(ErrorKind::invalid_argument, "variance undefined for a single pair");
  const double gaps = detail::gap_sum(pairs);
  const double ii = static_cast<double>(count);
  const double a = lambda_hat * gaps / ii;
  double ss = 0.0;
  for (const auto& p : pairs) {
    const double r = p.diff() - a;
    ss += r * r;
  }
  return ss * (ii / (ii - 1.0)) / (gaps * gaps);
}

/// Conservative variance for the bias-corrected estimator. `use_taper`
/// switches to the regularized form with threshold `delta`. Centering
/// `as_printed` uses a = lambda * sum(gap) / I; `self_consistent` uses
/// a = lambda * 2 sum(gap) / I, the mean of the weighted differences.
inline double bc_variance(std::span<const PairObservation> pairs, double lambda_bc,
                          bool use_taper, double delta, Centering centering) {
  const std::size_t count = pairs.size();
  if (count < 2) fail(ErrorKind::invalid_argument, "variance undefined for a single pair");
  const double gaps = detail::gap_sum(pairs);
  const double ii = static_cast<double>(count);
  const double a = centering == Centering::as_printed ? lambda_bc * gaps / ii
                                                      : lambda_bc * 2.0 * gaps / ii;
  const std::optional<double> td = use_taper ? std::optional<double>(delta) : std::nullopt;
  double ss = 0.0;
  for (const auto& p : pairs) {
    const double w = detail::ip_weight(p, td);
    if (!std::isfinite(w)) fail(ErrorKind::degenerate, "bc_variance: infinite weight");
    const double r = w * p.diff() - a;
    ss += r * r;
  }
  return ss * (ii / (ii - 1.0)) / (4.0 * gaps * gaps);
}

/// Two-sided Wald interval estimate +/- z_{1-alpha/2} sqrt(variance).
inline std::pair<double, double> wald_ci(double estimate, double variance, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::invalid_argument, "alpha must lie in (0, 1)");
  if (!(variance >= 0.0)) fail(ErrorKind::invalid_argument, "variance must be nonnegative");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
  return {estimate - half, estimate + half};
}

struct EstimateOptions {
  EstimatorMethod method = EstimatorMethod::classic;
  double alpha = 0.05;
  double delta = 0.1;
  Centering centering = Centering::self_consistent;
};

/// Builds the per-pair observations. `p_high` supplies one probability per
/// pair when given; otherwise it is computed from `gps`, or left at 1/2.
inline std::vector<PairObservation> pair_observations(const MatchedPairSet& set,
                                                      const GpsModel* gps,
                                                      std::span<const double> p_high,
                                                      double delta) {
  if (!p_high.empty() && p_high.size() != set.size()) {
    fail(ErrorKind::invalid_argument, "one oracle probability per pair is required");
  }
  std::vector<PairObservation> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Unit& hi = set.high(i);
    const Unit& lo = set.low(i);
    PairObservation obs;
    obs.y_high = hi.outcome;
    obs.y_low = lo.outcome;
    obs.gap = set.pairs[i].gap();
    if (!(obs.gap > 0.0)) {
      fail(ErrorKind::data, "pair " + std::to_string(i) + " has a non-positive dose gap");
    }
    if (!p_high.empty()) {
      obs.p_high = p_high[i];
    } else if (gps) {
      obs.p_high = pair_probability(*gps, hi, lo).p_high_first;
    }
    obs.p_high_tapered = taper(obs.p_high, delta);
    out.push_back(obs);
  }
  return out;
}

inline EstimateReport estimate_report(std::span<const PairObservation> obs,
                                      const EstimateOptions& opt) {
  EstimateReport r;
  r.alpha = opt.alpha;
  r.method = opt.method;
  r.centering = opt.centering;
  if (opt.method == EstimatorMethod::classic) {
    r.estimate = classic_neyman(obs);
    r.variance = classic_variance(obs, r.estimate);
  } else {
    const bool taper_on = opt.method == EstimatorMethod::bc_regularized;
    r.estimate = bc_neyman(obs, taper_on);
    r.variance = bc_variance(obs, r.estimate, taper_on, opt.delta, opt.centering);
  }
  std::tie(r.ci_low, r.ci_high) = wald_ci(r.estimate, r.variance, opt.alpha);
  return r;
}

/// bc_plugin / bc_regularized need `gps`; bc_oracle needs `oracle_p`.
inline EstimateReport estimate_report(const MatchedPairSet& set, const GpsModel* gps,
                                      const EstimateOptions& opt,
                                      std::span<const double> oracle_p = {}) {
  std::span<const double> p;
  const GpsModel* model = nullptr;
  switch (opt.method) {
    case EstimatorMethod::classic:
      break;
    case EstimatorMethod::bc_oracle:
      if (oracle_p.empty()) {
        fail(ErrorKind::invalid_argument, "bc_oracle requires the true assignment probabilities");
      }
      p = oracle_p;
      break;
    case EstimatorMethod::bc_plugin:
    case EstimatorMethod::bc_regularized:
      if (!gps) fail(ErrorKind::invalid_argument, "bias-corrected estimators require a GPS model");
      model = gps;
      break;
  }
  const auto obs = pair_observations(set, model, p, opt.delta);
  return estimate_report(obs, opt);
}

}  // namespace nbp
