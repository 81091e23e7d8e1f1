#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nbp/blossom.hpp"
#include "nbp/core.hpp"
#include "nbp/distance.hpp"
#include "nbp/gps.hpp"

namespace nbp {

/// Dense symmetric cost matrix over the (possibly phantom-augmented) node set.
/// Forbidden edges, including the diagonal, are absent from the solver graph.
class MatchingProblem {
public:
  explicit MatchingProblem(std::size_t n_real)
      : n_real_(n_real),
        n_nodes_(n_real % 2 == 1 ? n_real + 1 : n_real),
        cost_(n_nodes_ * n_nodes_, 0.0),
        forbidden_(n_nodes_ * n_nodes_, 0) {
    for (std::size_t v = 0; v < n_nodes_; ++v) forbidden_[v * n_nodes_ + v] = 1;
  }

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_real() const noexcept { return n_real_; }
  std::optional<std::size_t> phantom_node() const {
    if (n_nodes_ != n_real_) return n_real_;
    return std::nullopt;
  }

  EdgeCost cost(std::size_t a, std::size_t b) const {
    if (forbidden_[a * n_nodes_ + b]) return Forbidden{};
    return cost_[a * n_nodes_ + b];
  }
  bool forbidden(std::size_t a, std::size_t b) const { return forbidden_[a * n_nodes_ + b] != 0; }
  double raw_cost(std::size_t a, std::size_t b) const { return cost_[a * n_nodes_ + b]; }

  void set_cost(std::size_t a, std::size_t b, const EdgeCost& c) {
    if (a == b) fail(ErrorKind::invalid_argument, "a node cannot be matched with itself");
    const char f = is_forbidden(c) ? 1 : 0;
    const double v = f ? 0.0 : std::get<double>(c);
    cost_[a * n_nodes_ + b] = cost_[b * n_nodes_ + a] = v;
    forbidden_[a * n_nodes_ + b] = forbidden_[b * n_nodes_ + a] = f;
  }

  /// Forbidden edges between distinct real nodes.
  std::size_t forbidden_edge_count() const {
    std::size_t count = 0;
    for (std::size_t a = 0; a < n_real_; ++a) {
      for (std::size_t b = a + 1; b < n_real_; ++b) count += forbidden_[a * n_nodes_ + b];
    }
    return count;
  }

  /// Soft-caliper penalty actually used, when one was resolved while building.
  std::optional<double> penalty_M;

private:
  std::size_t n_real_;
  std::size_t n_nodes_;
  std::vector<double> cost_;
  std::vector<char> forbidden_;
};

struct MatchingSolution {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (a, b) with a < b, sorted
  double total_cost = 0.0;
  std::vector<std::size_t> excluded_nodes;
};

/// Builds the edge costs d (or d* when a caliper is configured) for every
/// pair of cohort units. Odd cohorts get one phantom node joined to every
/// real node at zero cost.
inline MatchingProblem build_problem(const Cohort& cohort, const CovarianceEstimate& cov,
                                     const DistanceConfig& config, const GpsModel* gps) {
  const std::size_t n = cohort.size();
  if (config.caliper) {
    config.caliper->validate();
    if (!gps) fail(ErrorKind::invalid_argument, "a caliper requires a GPS model");
  }
  if (cov.dim() != cohort.dim()) {
    fail(ErrorKind::invalid_argument, "covariance dimension does not match the cohort");
  }

  // Whitened covariates turn every Mahalanobis distance into a Euclidean one.
  Eigen::MatrixXd x(cohort.dim(), n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < cohort.dim(); ++k) x(k, r) = cohort[r].covariates[k];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix());
  const Eigen::MatrixXd white = llt.matrixL().solve(x);

  MatchingProblem prob(n);
  std::vector<double> base(n * n, 0.0);
  double max_base = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double phi = (white.col(a) - white.col(b)).norm();
      double d = phi;
      if (config.kind == DistanceKind::dose_penalized) {
        const double dz = cohort[a].dose - cohort[b].dose;
        d = dz == 0.0 ? kInfiniteDistance : phi / (dz * dz);
      }
      base[a * n + b] = d;
      if (std::isfinite(d)) max_base = std::max(max_base, d);
    }
  }

  double penalty = 0.0;
  if (config.caliper && config.caliper->mode == CaliperMode::soft) {
    penalty = config.caliper->penalty_M.value_or(1e6 * (max_base > 0.0 ? max_base : 1.0));
    prob.penalty_M = penalty;
  }

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = base[a * n + b];
      if (!std::isfinite(d)) {
        prob.set_cost(a, b, Forbidden{});
        continue;
      }
      if (!config.caliper) {
        prob.set_cost(a, b, d);
        continue;
      }
      if (cohort[a].dose == cohort[b].dose) {
        // No higher-dose unit: the caliper cannot be evaluated and such a
        // pair would be dropped anyway.
        prob.set_cost(a, b, config.caliper->mode == CaliperMode::hard ? EdgeCost{Forbidden{}}
                                                                      : EdgeCost{d + penalty});
        continue;
      }
      const auto p = pair_probability(*gps, cohort[a], cohort[b]);
      prob.set_cost(a, b, calipered_distance(d, p.p_high_first, p.p_high_second,
                                             *config.caliper, penalty));
    }
  }
  if (auto ph = prob.phantom_node()) {
    for (std::size_t a = 0; a < n; ++a) prob.set_cost(a, *ph, 0.0);
  }
  return prob;
}

namespace detail {

// Pairwise exchange pass: replaces (a,b),(c,d) by (a,c),(b,d) or (a,d),(b,c)
// when that lowers the cost, or keeps it equal and gives the smallest node a
// smaller partner. Repeats until no exchange applies, so equal-cost optima
// come out in a fixed, lexicographically reduced order.
inline void canonicalize(const MatchingProblem& prob, std::vector<int>& mate) {
  const std::size_t n = prob.n_nodes();
  auto ok = [&](std::size_t u, std::size_t v) { return !prob.forbidden(u, v); };
  auto c = [&](std::size_t u, std::size_t v) { return prob.raw_cost(u, v); };
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t a = 0; a < n; ++a) {
      if (static_cast<std::size_t>(mate[a]) < a) continue;
      for (std::size_t cc = a + 1; cc < n; ++cc) {
        const auto b = static_cast<std::size_t>(mate[a]);
        const auto d = static_cast<std::size_t>(mate[cc]);
        if (d < cc || cc == b) continue;
        const double old_cost = c(a, b) + c(cc, d);
        // a is the smallest of the four nodes
        const std::size_t alt[2][2] = {{cc, d}, {d, cc}};
        for (const auto& pr : alt) {
          const std::size_t x = pr[0];
          const std::size_t y = pr[1];
          if (!ok(a, x) || !ok(b, y)) continue;
          const double new_cost = c(a, x) + c(b, y);
          if (new_cost < old_cost || (new_cost == old_cost && x < b)) {
            mate[a] = static_cast<int>(x);
            mate[x] = static_cast<int>(a);
            mate[b] = static_cast<int>(y);
            mate[y] = static_cast<int>(b);
            changed = true;
            break;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Exact minimum-cost perfect matching over the non-forbidden edges. Pairs
/// that involve the phantom node are reported through excluded_nodes.
inline MatchingSolution solve(const MatchingProblem& prob) {
  const std::size_t n = prob.n_nodes();
  MatchingSolution sol;
  if (n == 0) return sol;

  double max_cost = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!prob.forbidden(a, b)) max_cost = std::max(max_cost, prob.raw_cost(a, b));
    }
  }
  // Every perfect matching has n/2 edges, so maximizing sum(W - cost) at
  // maximum cardinality minimizes the total cost.
  const double shift = max_cost + 1.0;
  std::vector<WeightedEdge> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (prob.forbidden(a, b)) continue;
      edges.push_back({static_cast<int>(a), static_cast<int>(b), shift - prob.raw_cost(a, b)});
    }
  }
  WeightedBlossom solver(static_cast<int>(n), std::move(edges), true);
  std::vector<int> mate = solver.solve();
  for (std::size_t v = 0; v < n; ++v) {
    if (mate[v] < 0) throw InfeasibleMatching(prob.forbidden_edge_count());
  }
  detail::canonicalize(prob, mate);

  const auto phantom = prob.phantom_node();
  for (std::size_t a = 0; a < n; ++a) {
    const auto b = static_cast<std::size_t>(mate[a]);
    if (b < a) continue;
    sol.total_cost += prob.raw_cost(a, b);
    if (phantom && b == *phantom) {
      sol.excluded_nodes.push_back(a);
    } else {
      sol.pairs.emplace_back(a, b);
    }
  }
  return sol;
}

/// Converts node-index pairs into MatchedPairs. Pairs with equal doses are
/// dropped and listed in `dropped`.
struct PairConversion {
  MatchedPairSet set;
  std::vector<std::pair<std::size_t, std::size_t>> dropped;
};

inline PairConversion to_pair_set(const MatchingSolution& sol,
                                  std::shared_ptr<const Cohort> cohort) {
  PairConversion out;
  out.set.cohort = cohort;
  for (const auto& [a, b] : sol.pairs) {
    if (a >= cohort->size() || b >= cohort->size()) {
      fail(ErrorKind::invalid_argument, "solution node index outside the cohort");
    }
    if ((*cohort)[a].dose == (*cohort)[b].dose) {
      out.dropped.emplace_back(a, b);
      continue;
    }
    out.set.pairs.push_back(make_pair(*cohort, a, b));
  }
  return out;
}

/// Convenience: covariance, costs, solve and conversion in one call.
struct MatchResult {
  MatchingProblem problem;
  MatchingSolution solution;
  PairConversion pairs;
};

inline MatchResult match_cohort(std::shared_ptr<const Cohort> cohort,
                                const DistanceConfig& config, const GpsModel* gps) {
  const auto cov = fit_covariance(*cohort);
  auto prob = build_problem(*cohort, cov, config, gps);
  auto sol = solve(prob);
  auto conv = to_pair_set(sol, cohort);
  return {std::move(prob), std::move(sol), std::move(conv)};
}

}  // namespace nbp
