#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nbp/core.hpp"

namespace nbp {

/// Sample covariance of the covariates (denominator N-1), ridged when
/// near-singular so that the Mahalanobis form stays a metric.
class CovarianceEstimate {
public:
  CovarianceEstimate(Eigen::MatrixXd matrix, double ridge_applied)
      : matrix_(std::move(matrix)), ridge_(ridge_applied), llt_(matrix_) {
    if (llt_.info() != Eigen::Success) {
      fail(ErrorKind::degenerate, "covariance matrix is not positive-definite");
    }
  }

  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  double ridge_applied() const noexcept { return ridge_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }

  // Squared Mahalanobis norm of v, via the Cholesky factor L: |L^{-1} v|^2.
  double quad_form(const Eigen::VectorXd& v) const {
    Eigen::VectorXd w = llt_.matrixL().solve(v);
    return w.squaredNorm();
  }

private:
  Eigen::MatrixXd matrix_;
  double ridge_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline CovarianceEstimate fit_covariance(std::span<const Unit> units, std::size_t dim) {
  const std::size_t n = units.size();
  if (n < 2) fail(ErrorKind::invalid_argument, "covariance needs at least 2 units");
  if (dim == 0) fail(ErrorKind::invalid_argument, "covariance needs at least one covariate");

  Eigen::MatrixXd x(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    if (units[r].covariates.size() != dim) {
      fail(ErrorKind::invalid_argument, "covariate dimension mismatch");
    }
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = units[r].covariates[k];
      if (!std::isfinite(v)) {
        fail(ErrorKind::data, "non-finite covariate for unit '" + units[r].id + "'");
      }
      x(r, k) = v;
    }
  }
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  double ridge = 0.0;
  if (lo < 1e-8 * hi || hi <= 0.0) {
    ridge = 1e-6 * cov.trace() / static_cast<double>(dim);
    // an all-constant design has zero trace
    if (ridge <= 0.0) ridge = 1e-6;
    cov += ridge * Eigen::MatrixXd::Identity(dim, dim);
  }
  return CovarianceEstimate(std::move(cov), ridge);
}

inline CovarianceEstimate fit_covariance(const Cohort& cohort) {
  return fit_covariance(std::span<const Unit>(cohort.units()), cohort.dim());
}

inline double mahalanobis(std::span<const double> a, std::span<const double> b,
                          const CovarianceEstimate& cov) {
  if (a.size() != b.size() || a.size() != cov.dim()) {
    fail(ErrorKind::invalid_argument, "mahalanobis: dimension mismatch");
  }
  Eigen::VectorXd d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  return std::sqrt(cov.quad_form(d));
}

enum class DistanceKind { mahalanobis, dose_penalized };
enum class CaliperMode { soft, hard };

struct CaliperConfig {
  double xi = 0.1;
  CaliperMode mode = CaliperMode::soft;
  // Soft-mode penalty. Unset means 1e6 times the largest finite base
  // distance of the problem at hand.
  std::optional<double> penalty_M;

  void validate() const {
    if (!(xi > 0.0 && xi < 0.5)) {
      fail(ErrorKind::invalid_argument, "caliper xi must lie in (0, 0.5)");
    }
    if (penalty_M && !(*penalty_M > 0.0)) {
      fail(ErrorKind::invalid_argument, "caliper penalty M must be positive");
    }
  }
};

struct DistanceConfig {
  DistanceKind kind = DistanceKind::mahalanobis;
  std::optional<CaliperConfig> caliper;
};

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

/// phi for `mahalanobis`, phi / (Z_a - Z_b)^2 for `dose_penalized`. Equal
/// doses under the dose penalty give +inf.
inline double base_distance(const Unit& a, const Unit& b, const CovarianceEstimate& cov,
                            DistanceKind kind) {
  const double phi = mahalanobis(a.covariates, b.covariates, cov);
  if (kind == DistanceKind::mahalanobis) return phi;
  const double dz = a.dose - b.dose;
  if (dz == 0.0) return kInfiniteDistance;
  return phi / (dz * dz);
}

struct Forbidden {
  bool operator==(const Forbidden&) const = default;
};

using EdgeCost = std::variant<double, Forbidden>;

inline bool is_forbidden(const EdgeCost& c) { return std::holds_alternative<Forbidden>(c); }

/// Returns true when the caliper indicator min(p_a, p_b) < xi fires.
inline bool caliper_fires(double p_a, double p_b, double xi) {
  return std::min(p_a, p_b) < xi;
}

/// d* = d + M * 1{min(p_a, p_b) < xi} in soft mode; Forbidden in hard mode.
/// `penalty_M` is the resolved penalty (the caller substitutes the default).
inline EdgeCost calipered_distance(double base, double p_a, double p_b,
                                   const CaliperConfig& caliper, double penalty_M) {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(p_a) || !in_unit(p_b)) {
    fail(ErrorKind::invalid_argument, "assignment probabilities must lie in [0, 1]");
  }
  if (std::abs(p_a + p_b - 1.0) > 1e-9) {
    fail(ErrorKind::invalid_argument, "assignment probabilities must sum to 1");
  }
  if (!caliper_fires(p_a, p_b, caliper.xi)) return base;
  if (caliper.mode == CaliperMode::hard) return Forbidden{};
  return base + penalty_M;
}

inline EdgeCost calipered_distance(double base, double p_a, double p_b,
                                   const CaliperConfig& caliper) {
  return calipered_distance(base, p_a, p_b, caliper, caliper.penalty_M.value_or(1e6));
}

}  // namespace nbp
