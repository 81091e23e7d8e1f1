#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nbp/core.hpp"

namespace nbp {

struct CovariateBalance {
  std::string name;
  double mean_high = 0.0;
  double mean_low = 0.0;
  double pooled_sd = 0.0;
  double std_diff = 0.0;
};

struct BalanceReport {
  std::vector<CovariateBalance> per_covariate;
  double max_abs_std_diff = 0.0;
  bool pass = true;
  double threshold = 0.2;
};

/// Standardized difference in means between the high- and low-dose members
/// of the pairs, one row per covariate. The pooled SD is
/// sqrt((s_high^2 + s_low^2) / 2) with per-group sample variances. A zero
/// pooled SD gives 0 when the means agree and +/-inf otherwise.
inline BalanceReport balance_report(const MatchedPairSet& set, double threshold = 0.2) {
  const std::size_t count = set.size();
  if (count < 2) fail(ErrorKind::invalid_argument, "balance needs at least 2 pairs");
  const auto& names = set.cohort->covariate_names();
  const double ii = static_cast<double>(count);

  BalanceReport rep;
  rep.threshold = threshold;
  for (std::size_t k = 0; k < names.size(); ++k) {
    double mh = 0.0;
    double ml = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      mh += set.high(i).covariates[k];
      ml += set.low(i).covariates[k];
    }
    mh /= ii;
    ml /= ii;
    double sh = 0.0;
    double sl = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double dh = set.high(i).covariates[k] - mh;
      const double dl = set.low(i).covariates[k] - ml;
      sh += dh * dh;
      sl += dl * dl;
    }
    sh /= ii - 1.0;
    sl /= ii - 1.0;

    CovariateBalance row{names[k], mh, ml, std::sqrt((sh + sl) / 2.0), 0.0};
    const double diff = mh - ml;
    if (row.pooled_sd > 0.0) {
      row.std_diff = diff / row.pooled_sd;
    } else if (diff != 0.0) {
      row.std_diff = std::copysign(std::numeric_limits<double>::infinity(), diff);
    }
    rep.max_abs_std_diff = std::max(rep.max_abs_std_diff, std::abs(row.std_diff));
    rep.per_covariate.push_back(std::move(row));
  }
  rep.pass = rep.max_abs_std_diff < threshold;
  return rep;
}

}  // namespace nbp
