#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "nbp/core.hpp"

namespace nbp {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;

inline double normal_log_pdf(double u) {
  return -0.5 * u * u + std::log(kInvSqrt2Pi);
}

// ---------------------------------------------------------------------------
// Regression of E[Z | X] for the model-based density.

/// A fitted conditional-mean function plus the number of parameters it spent,
/// which sets the residual degrees of freedom.
struct FittedMean {
  std::function<double(std::span<const double>)> predict;
  double n_params = 1.0;
};

class RegressorSpec {
public:
  virtual ~RegressorSpec() = default;
  virtual FittedMean fit(std::span<const Unit> units) const = 0;
};

namespace detail {

// Type-7 sample quantile of a sorted vector.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::size_t covariate_dim(std::span<const Unit> units) {
  return units.empty() ? 0 : units.front().covariates.size();
}

}  // namespace detail

/// Least squares on an intercept plus linear terms, optional squares and
/// optional hinges max(0, x_k - c) at per-covariate quantile knots. The fit is
/// rank-revealing, so collinear or all-zero basis columns are harmless and the
/// parameter count is the numerical rank.
class LeastSquaresRegressor : public RegressorSpec {
public:
  bool squares = true;
  bool hinges = true;
  std::vector<double> knot_quantiles{0.25, 0.5, 0.75};

  LeastSquaresRegressor() = default;
  LeastSquaresRegressor(bool use_squares, bool use_hinges)
      : squares(use_squares), hinges(use_hinges) {}

  FittedMean fit(std::span<const Unit> units) const override {
    const std::size_t n = units.size();
    const std::size_t dim = detail::covariate_dim(units);

    std::vector<std::vector<double>> knots(dim);
    if (hinges && n > 0) {
      for (std::size_t k = 0; k < dim; ++k) {
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = units[r].covariates[k];
        std::sort(col.begin(), col.end());
        for (double q : knot_quantiles) {
          const double c = detail::sorted_quantile(col, q);
          if (std::find(knots[k].begin(), knots[k].end(), c) == knots[k].end()) {
            knots[k].push_back(c);
          }
        }
      }
    }

    const bool sq = squares;
    auto features = [dim, sq, knots](std::span<const double> x) {
      std::vector<double> f;
      f.push_back(1.0);
      for (std::size_t k = 0; k < dim; ++k) f.push_back(x[k]);
      if (sq) {
        for (std::size_t k = 0; k < dim; ++k) f.push_back(x[k] * x[k]);
      }
      for (std::size_t k = 0; k < dim; ++k) {
        for (double c : knots[k]) f.push_back(std::max(0.0, x[k] - c));
      }
      return f;
    };

    const std::size_t p = features(std::vector<double>(dim, 0.0)).size();
    if (n <= p) {
      fail(ErrorKind::invalid_argument,
           "model-based fit needs more observations (" + std::to_string(n) +
               ") than basis functions (" + std::to_string(p) + ")");
    }
    Eigen::MatrixXd design(n, p);
    Eigen::VectorXd z(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto f = features(units[r].covariates);
      for (std::size_t c = 0; c < p; ++c) design(r, c) = f[c];
      z[r] = units[r].dose;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    Eigen::VectorXd beta = qr.solve(z);
    const auto rank = static_cast<double>(qr.rank());

    std::vector<double> coef(beta.data(), beta.data() + beta.size());
    FittedMean out;
    out.n_params = rank;
    out.predict = [features, coef](std::span<const double> x) {
      const auto f = features(x);
      double s = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) s += coef[c] * f[c];
      return s;
    };
    return out;
  }
};

/// Mean dose of the k nearest units in standardized covariate space. A
/// training unit is its own nearest neighbour, so the smoother has trace n/k,
/// which is used as the parameter count.
class KnnRegressor : public RegressorSpec {
public:
  std::size_t k = 10;

  KnnRegressor() = default;
  explicit KnnRegressor(std::size_t neighbours) : k(neighbours) {}

  FittedMean fit(std::span<const Unit> units) const override {
    const std::size_t n = units.size();
    if (k == 0 || k > n) fail(ErrorKind::invalid_argument, "knn: k must lie in [1, N]");
    const std::size_t dim = detail::covariate_dim(units);

    std::vector<double> scale(dim, 1.0);
    for (std::size_t c = 0; c < dim; ++c) {
      double mean = 0.0;
      for (const auto& u : units) mean += u.covariates[c];
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (const auto& u : units) ss += (u.covariates[c] - mean) * (u.covariates[c] - mean);
      const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
      if (sd > 0.0) scale[c] = sd;
    }
    std::vector<std::vector<double>> xs;
    std::vector<double> zs;
    for (const auto& u : units) {
      xs.push_back(u.covariates);
      zs.push_back(u.dose);
    }
    const std::size_t kk = k;
    FittedMean out;
    out.n_params = static_cast<double>(n) / static_cast<double>(k);
    out.predict = [xs, zs, scale, kk](std::span<const double> x) {
      std::vector<std::pair<double, std::size_t>> d(xs.size());
      for (std::size_t m = 0; m < xs.size(); ++m) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          const double t = (x[c] - xs[m][c]) / scale[c];
          s += t * t;
        }
        d[m] = {s, m};
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
      double total = 0.0;
      for (std::size_t i = 0; i < kk; ++i) total += zs[d[i].second];
      return total / static_cast<double>(kk);
    };
    return out;
  }
};

// ---------------------------------------------------------------------------

enum class GpsMethod { model_based, kernel, external };

/// A fitted generalized propensity score f(z | x).
class GpsModel {
public:
  struct ModelBased {
    std::function<double(std::span<const double>)> mean;
    double sigma;
  };
  struct Kernel {
    std::vector<std::vector<double>> x;  // standardized
    std::vector<double> z;
    std::vector<double> scale;
    double bw_z;
    double bw_x;
  };
  struct External {
    std::shared_ptr<const Cohort> cohort;
    std::vector<double> table;  // row-major N x N, table[n*N + m] = f(Z_m | x_n)
  };

  /// Gaussian location model with a known (or fitted) mean function.
  static GpsModel model_based(std::function<double(std::span<const double>)> mean,
                              double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      fail(ErrorKind::invalid_argument, "sigma must be positive");
    }
    return GpsModel(ModelBased{std::move(mean), sigma});
  }

  static GpsModel from_kernel(Kernel k) { return GpsModel(std::move(k)); }
  static GpsModel from_table(External e) { return GpsModel(std::move(e)); }

  GpsMethod method() const {
    if (std::holds_alternative<ModelBased>(state_)) return GpsMethod::model_based;
    if (std::holds_alternative<Kernel>(state_)) return GpsMethod::kernel;
    return GpsMethod::external;
  }

  std::optional<double> sigma_hat() const {
    if (auto* m = std::get_if<ModelBased>(&state_)) return m->sigma;
    return std::nullopt;
  }

  /// (bw_z, bw_x) for kernel models.
  std::optional<std::pair<double, double>> bandwidth() const {
    if (auto* k = std::get_if<Kernel>(&state_)) return std::pair{k->bw_z, k->bw_x};
    return std::nullopt;
  }

  /// Conditional mean for model-based fits.
  double mean(std::span<const double> x) const {
    if (auto* m = std::get_if<ModelBased>(&state_)) return m->mean(x);
    fail(ErrorKind::invalid_argument, "mean() is only defined for model-based fits");
  }

  /// log f(z | x) for functional models. External tables need a unit.
  double log_density(double z, std::span<const double> x) const {
    if (auto* m = std::get_if<ModelBased>(&state_)) {
      return normal_log_pdf((z - m->mean(x)) / m->sigma) - std::log(m->sigma);
    }
    if (auto* k = std::get_if<Kernel>(&state_)) return kernel_log_density(*k, z, x);
    fail(ErrorKind::invalid_argument,
         "external density tables are only defined at observed (unit, dose) cells");
  }

  double density(double z, std::span<const double> x) const {
    return std::exp(log_density(z, x));
  }

  /// log f(z | x_u). For external tables z must equal an observed dose.
  double log_density(const Unit& u, double z) const {
    if (auto* e = std::get_if<External>(&state_)) {
      const auto row = e->cohort->index_of(u.id);
      if (!row) fail(ErrorKind::data, "unit '" + u.id + "' is not in the density table");
      const std::size_t n = e->cohort->size();
      for (std::size_t m = 0; m < n; ++m) {
        if ((*e->cohort)[m].dose == z) return std::log(e->table[*row * n + m]);
      }
      fail(ErrorKind::invalid_argument,
           "density table has no column for dose " + std::to_string(z));
    }
    return log_density(z, u.covariates);
  }

  double density(const Unit& u, double z) const { return std::exp(log_density(u, z)); }

private:
  using State = std::variant<ModelBased, Kernel, External>;
  explicit GpsModel(State s) : state_(std::move(s)) {}
  State state_;

  static double kernel_log_density(const Kernel& k, double z, std::span<const double> x) {
    const std::size_t n = k.z.size();
    if (x.size() != k.scale.size()) {
      fail(ErrorKind::invalid_argument, "kernel density: dimension mismatch");
    }
    // Covariate weights are shifted by the smallest squared distance so that
    // far-away queries do not underflow; the shift cancels in the ratio.
    std::vector<double> d2(n);
    double d2min = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) {
        const double t = (x[c] / k.scale[c] - k.x[m][c]) / k.bw_x;
        s += t * t;
      }
      d2[m] = s;
      d2min = std::min(d2min, s);
    }
    double wsum = 0.0;
    double num = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      const double w = std::exp(-0.5 * (d2[m] - d2min));
      const double u = (z - k.z[m]) / k.bw_z;
      wsum += w;
      num += w * std::exp(-0.5 * u * u);
    }
    if (!(wsum > 0.0) || !std::isfinite(wsum)) {
      fail(ErrorKind::degenerate, "kernel density: all covariate weights vanish");
    }
    return std::log(num / wsum) + std::log(kInvSqrt2Pi / k.bw_z);
  }

};

inline GpsModel fit_model_based(std::span<const Unit> units, const RegressorSpec& regressor) {
  const FittedMean fitted = regressor.fit(units);
  const double n = static_cast<double>(units.size());
  const double df = n - fitted.n_params;
  if (!(df > 0.0)) {
    fail(ErrorKind::invalid_argument,
         "model-based fit has no residual degrees of freedom (N=" +
             std::to_string(units.size()) + ")");
  }
  double rss = 0.0;
  double zmean = 0.0;
  for (const auto& u : units) zmean += u.dose;
  zmean /= n;
  double zss = 0.0;
  for (const auto& u : units) {
    const double r = u.dose - fitted.predict(u.covariates);
    rss += r * r;
    zss += (u.dose - zmean) * (u.dose - zmean);
  }
  const double sigma = std::sqrt(rss / df);
  const double zscale = std::max(1.0, std::sqrt(zss / n));
  if (!(sigma > 1e-10 * zscale)) fail(ErrorKind::degenerate, "degenerate fit: zero residual variance");
  return GpsModel::model_based(fitted.predict, sigma);
}

inline GpsModel fit_model_based(const Cohort& cohort, const RegressorSpec& regressor) {
  return fit_model_based(std::span<const Unit>(cohort.units()), regressor);
}

/// Nadaraya-Watson conditional density with Gaussian kernels in z and in the
/// standardized covariates. Unset bandwidths use 1.06 * sd(Z) * N^(-1/5) for
/// z and 1.06 * N^(-1/(K+4)) for the standardized covariates.
inline GpsModel fit_kernel(std::span<const Unit> units, std::optional<double> bw_z = {},
                           std::optional<double> bw_x = {}) {
  const std::size_t n = units.size();
  if (n == 0) fail(ErrorKind::invalid_argument, "kernel density needs at least one unit");
  const std::size_t dim = detail::covariate_dim(units);
  const double nn = static_cast<double>(n);

  GpsModel::Kernel k;
  k.scale.assign(dim, 1.0);
  for (std::size_t c = 0; c < dim; ++c) {
    double mean = 0.0;
    for (const auto& u : units) mean += u.covariates[c];
    mean /= nn;
    double ss = 0.0;
    for (const auto& u : units) ss += (u.covariates[c] - mean) * (u.covariates[c] - mean);
    const double sd = n > 1 ? std::sqrt(ss / (nn - 1.0)) : 0.0;
    if (sd > 0.0) k.scale[c] = sd;
  }
  for (const auto& u : units) {
    std::vector<double> xs(dim);
    for (std::size_t c = 0; c < dim; ++c) xs[c] = u.covariates[c] / k.scale[c];
    k.x.push_back(std::move(xs));
    k.z.push_back(u.dose);
  }
  if (bw_z) {
    k.bw_z = *bw_z;
  } else {
    double mean = 0.0;
    for (double z : k.z) mean += z;
    mean /= nn;
    double ss = 0.0;
    for (double z : k.z) ss += (z - mean) * (z - mean);
    const double sd = n > 1 ? std::sqrt(ss / (nn - 1.0)) : 1.0;
    k.bw_z = 1.06 * (sd > 0.0 ? sd : 1.0) * std::pow(nn, -0.2);
  }
  k.bw_x = bw_x ? *bw_x : 1.06 * std::pow(nn, -1.0 / (static_cast<double>(dim) + 4.0));
  if (!(k.bw_z > 0.0) || !(k.bw_x > 0.0)) {
    fail(ErrorKind::invalid_argument, "kernel bandwidths must be positive");
  }
  return GpsModel::from_kernel(std::move(k));
}

inline GpsModel fit_kernel(const Cohort& cohort, std::optional<double> bw_z = {},
                           std::optional<double> bw_x = {}) {
  return fit_kernel(std::span<const Unit>(cohort.units()), bw_z, bw_x);
}

/// Wraps an N x N table with table[n*N + m] = f(Z_m | x_n).
inline GpsModel load_external(std::shared_ptr<const Cohort> cohort, std::vector<double> table) {
  const std::size_t n = cohort->size();
  if (table.size() != n * n) {
    fail(ErrorKind::data, "density table must be " + std::to_string(n) + " x " +
                              std::to_string(n));
  }
  for (double v : table) {
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorKind::data, "density table entries must be finite and nonnegative");
    }
  }
  return GpsModel::from_table(GpsModel::External{std::move(cohort), std::move(table)});
}

// ---------------------------------------------------------------------------

/// Probabilities that the first / second listed unit received the higher dose
/// of the pair, conditional on the pair's dose set.
struct PairAssignmentProb {
  double p_high_first;
  double p_high_second;
};

inline PairAssignmentProb pair_probability(const GpsModel& model, const Unit& a, const Unit& b) {
  if (a.dose == b.dose) {
    fail(ErrorKind::invalid_argument, "pair_probability: units '" + a.id + "' and '" + b.id +
                                          "' have equal doses");
  }
  const bool a_high = a.dose > b.dose;
  const Unit& h = a_high ? a : b;
  const Unit& o = a_high ? b : a;
  const double z_hi = h.dose;
  const double z_lo = o.dose;
  // log of f(z**|x_h) f(z*|x_o) (observed) and f(z*|x_h) f(z**|x_o) (swapped)
  const double l_obs = model.log_density(h, z_hi) + model.log_density(o, z_lo);
  const double l_swap = model.log_density(h, z_lo) + model.log_density(o, z_hi);
  if (std::isnan(l_obs) || std::isnan(l_swap)) {
    fail(ErrorKind::degenerate, "undefined assignment probability (non-finite density)");
  }
  if (l_obs == -std::numeric_limits<double>::infinity() &&
      l_swap == -std::numeric_limits<double>::infinity()) {
    fail(ErrorKind::degenerate, "undefined assignment probability for units '" + a.id +
                                    "' and '" + b.id + "' (0/0)");
  }
  double p_h;
  double p_o;
  if (l_obs >= l_swap) {
    const double r = std::exp(l_swap - l_obs);
    p_h = 1.0 / (1.0 + r);
    p_o = r / (1.0 + r);
  } else {
    const double r = std::exp(l_obs - l_swap);
    p_o = 1.0 / (1.0 + r);
    p_h = r / (1.0 + r);
  }
  return a_high ? PairAssignmentProb{p_h, p_o} : PairAssignmentProb{p_o, p_h};
}

/// Clamp p to [delta, 1 - delta].
inline double taper(double p, double delta) {
  if (!(delta > 0.0 && delta < 0.5)) {
    fail(ErrorKind::invalid_argument, "taper: delta must lie in (0, 0.5)");
  }
  return std::clamp(p, delta, 1.0 - delta);
}

}  // namespace nbp
