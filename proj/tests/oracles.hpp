#pragma once

// Independent reference computations used only by the test suites. None of
// these go through the library's solver or estimator code paths.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

// Enumerates every perfect matching of nodes 0..n-1 (n even) in
// lexicographic order of the sorted pair list.
inline void for_each_perfect_matching(std::size_t n,
                                      const std::function<void(const Pairs&)>& visit) {
  std::vector<bool> used(n, false);
  Pairs cur;
  std::function<void()> rec = [&]() {
    std::size_t first = 0;
    while (first < n && used[first]) ++first;
    if (first == n) {
      visit(cur);
      return;
    }
    used[first] = true;
    for (std::size_t j = first + 1; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      cur.emplace_back(first, j);
      rec();
      cur.pop_back();
      used[j] = false;
    }
    used[first] = false;
  };
  rec();
}

struct BruteForceResult {
  double cost = std::numeric_limits<double>::infinity();
  Pairs pairs;
  bool feasible = false;
};

// `cost(a, b)` returns +inf for forbidden edges. Sums are accumulated over the
// sorted pair list, the same order the solver reports its total in, so equal
// matchings give bit-identical totals. Ties keep the lexicographically first.
inline BruteForceResult brute_force_min_matching(
    std::size_t n, const std::function<double(std::size_t, std::size_t)>& cost) {
  BruteForceResult best;
  for_each_perfect_matching(n, [&](const Pairs& m) {
    double total = 0.0;
    for (const auto& [a, b] : m) total += cost(a, b);
    if (!std::isfinite(total)) return;
    if (total < best.cost) {
      best.cost = total;
      best.pairs = m;
      best.feasible = true;
    }
  });
  return best;
}

// Subset DP for minimum perfect matching, exact for n up to ~22.
inline double dp_min_matching(std::size_t n,
                              const std::function<double(std::size_t, std::size_t)>& cost) {
  const std::uint32_t full = (1u << n) - 1;
  std::vector<double> best(std::size_t{1} << n, std::numeric_limits<double>::infinity());
  best[0] = 0.0;
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    if (!std::isfinite(best[mask])) continue;
    std::size_t i = 0;
    while (mask & (1u << i)) ++i;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (mask & (1u << j)) continue;
      const std::uint32_t next = mask | (1u << i) | (1u << j);
      const double c = best[mask] + cost(i, j);
      if (c < best[next]) best[next] = c;
    }
  }
  return best[full];
}

// Standard normal CDF by erfc, and its inverse by bisection.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile_bisect(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      std::size_t panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) {
    s += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  }
  return s * h / 3.0;
}

// One matched pair's fixed potential outcomes and dose set. Unit 1 receives
// the higher dose with probability p1.
struct PairTable {
  double y1_lo, y1_hi, y2_lo, y2_hi;
  double z_lo, z_hi;
  double p1;
};

inline double true_lambda(const std::vector<PairTable>& t) {
  double num = 0.0;
  double gaps = 0.0;
  for (const auto& p : t) {
    num += (p.y1_hi - p.y1_lo) + (p.y2_hi - p.y2_lo);
    gaps += p.z_hi - p.z_lo;
  }
  return num / (2.0 * gaps);
}

// Observed (y_high, y_low, p_high) for one pair under an assignment bit:
// bit set means unit 1 received the higher dose.
struct Realized {
  double y_high, y_low, p_high;
};

inline Realized realize(const PairTable& p, bool unit1_high) {
  if (unit1_high) return {p.y1_hi, p.y2_lo, p.p1};
  return {p.y2_hi, p.y1_lo, 1.0 - p.p1};
}

// Exact mean and variance of a statistic over all 2^I assignments, with the
// statistic evaluated on the realized per-pair data.
struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

inline Moments enumerate(const std::vector<PairTable>& t,
                         const std::function<double(const std::vector<Realized>&)>& stat) {
  const std::size_t I = t.size();
  double m1 = 0.0;
  double m2 = 0.0;
  std::vector<Realized> r(I);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << I); ++mask) {
    double prob = 1.0;
    for (std::size_t i = 0; i < I; ++i) {
      const bool hi1 = (mask >> i) & 1u;
      prob *= hi1 ? t[i].p1 : 1.0 - t[i].p1;
      r[i] = realize(t[i], hi1);
    }
    const double s = stat(r);
    m1 += prob * s;
    m2 += prob * s * s;
  }
  return {m1, m2 - m1 * m1};
}

// Exact variance computed as E[(s - E s)^2] in a second pass, which avoids
// the cancellation in E[s^2] - (E s)^2.
inline double enumerate_variance(const std::vector<PairTable>& t,
                                 const std::function<double(const std::vector<Realized>&)>& stat,
                                 double mean) {
  const std::size_t I = t.size();
  double v = 0.0;
  std::vector<Realized> r(I);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << I); ++mask) {
    double prob = 1.0;
    for (std::size_t i = 0; i < I; ++i) {
      const bool hi1 = (mask >> i) & 1u;
      prob *= hi1 ? t[i].p1 : 1.0 - t[i].p1;
      r[i] = realize(t[i], hi1);
    }
    const double d = stat(r) - mean;
    v += prob * d * d;
  }
  return v;
}

}  // namespace oracle
