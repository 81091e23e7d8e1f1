#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>

#include "nbp/matcher.hpp"
#include "oracles.hpp"

using namespace nbp;

namespace {

MatchingProblem random_problem(std::size_t n, std::mt19937_64& rng, double p_forbid = 0.0) {
  MatchingProblem prob(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (u(rng) < p_forbid) {
        prob.set_cost(a, b, Forbidden{});
      } else {
        prob.set_cost(a, b, u(rng));
      }
    }
  }
  return prob;
}

double oracle_cost(const MatchingProblem& prob, std::size_t a, std::size_t b) {
  return prob.forbidden(a, b) ? std::numeric_limits<double>::infinity() : prob.raw_cost(a, b);
}

std::shared_ptr<const Cohort> cohort_from(std::vector<std::pair<double, std::vector<double>>> rows) {
  std::vector<Unit> units;
  std::size_t k = rows.front().second.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    units.push_back({std::to_string(i), rows[i].first, 0.0, rows[i].second});
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < k; ++c) names.push_back("x" + std::to_string(c + 1));
  return std::make_shared<const Cohort>(std::move(units), std::move(names));
}

}  // namespace

TEST_CASE("solve picks the two cheap edges of K4") {
  MatchingProblem prob(4);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) prob.set_cost(a, b, 10.0);
  prob.set_cost(0, 1, 1.0);
  prob.set_cost(2, 3, 1.0);
  const auto sol = solve(prob);
  REQUIRE(sol.pairs == oracle::Pairs{{0, 1}, {2, 3}});
  REQUIRE(sol.total_cost == 2.0);
  REQUIRE(sol.excluded_nodes.empty());
}

TEST_CASE("equal costs break ties to the lexicographically smallest pair list") {
  for (std::size_t n : {4u, 6u, 8u, 10u}) {
    MatchingProblem prob(n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) prob.set_cost(a, b, 7.0);
    const auto sol = solve(prob);
    oracle::Pairs expect;
    for (std::size_t a = 0; a < n; a += 2) expect.emplace_back(a, a + 1);
    CHECK(sol.pairs == expect);
    CHECK(sol.total_cost == 7.0 * static_cast<double>(n / 2));
  }
}

TEST_CASE("solve matches exhaustive enumeration on small random graphs") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 * (2 + trial % 4);  // 4..10
    const auto prob = random_problem(n, rng);
    const auto sol = solve(prob);
    const auto bf = oracle::brute_force_min_matching(
        n, [&](std::size_t a, std::size_t b) { return oracle_cost(prob, a, b); });
    REQUIRE(sol.total_cost == bf.cost);
    REQUIRE(sol.pairs == bf.pairs);
  }
}

TEST_CASE("six random nodes equal the minimum over all 15 perfect matchings") {
  std::mt19937_64 rng(6);
  const auto prob = random_problem(6, rng);
  std::size_t count = 0;
  double best = std::numeric_limits<double>::infinity();
  oracle::for_each_perfect_matching(6, [&](const oracle::Pairs& m) {
    ++count;
    double t = 0.0;
    for (auto [a, b] : m) t += prob.raw_cost(a, b);
    best = std::min(best, t);
  });
  REQUIRE(count == 15);
  REQUIRE(solve(prob).total_cost == best);
}

TEST_CASE("solve agrees with the subset DP on larger graphs, with forbidden edges") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 12 + 2 * (trial % 5);  // 12..20
    const auto prob = random_problem(n, rng, 0.3);
    const double dp = oracle::dp_min_matching(
        n, [&](std::size_t a, std::size_t b) { return oracle_cost(prob, a, b); });
    if (!std::isfinite(dp)) {
      REQUIRE_THROWS_AS(solve(prob), InfeasibleMatching);
      continue;
    }
    const auto sol = solve(prob);
    REQUIRE(sol.total_cost == Catch::Approx(dp).epsilon(1e-12));
    for (auto [a, b] : sol.pairs) REQUIRE_FALSE(prob.forbidden(a, b));
  }
}

TEST_CASE("integer-cost graphs with many ties still reach the optimum") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> u(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + 2 * (trial % 6);
    MatchingProblem prob(n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) prob.set_cost(a, b, static_cast<double>(u(rng)));
    const double dp = oracle::dp_min_matching(
        n, [&](std::size_t a, std::size_t b) { return prob.raw_cost(a, b); });
    REQUIRE(solve(prob).total_cost == dp);
  }
}

TEST_CASE("scaling all costs leaves the pairing unchanged") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 8;
    const auto prob = random_problem(n, rng);
    MatchingProblem scaled(n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) scaled.set_cost(a, b, 37.5 * prob.raw_cost(a, b));
    REQUIRE(solve(prob).pairs == solve(scaled).pairs);
  }
}

TEST_CASE("odd cohorts get a zero-cost phantom and exclude exactly one unit") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<std::pair<double, std::vector<double>>> rows;
  for (int i = 0; i < 5; ++i) rows.push_back({static_cast<double>(i), {g(rng), g(rng)}});
  const auto cohort = cohort_from(rows);
  const auto cov = fit_covariance(*cohort);
  const auto prob = build_problem(*cohort, cov, {}, nullptr);
  REQUIRE(prob.n_nodes() == 6);
  REQUIRE(prob.phantom_node() == std::size_t{5});
  for (std::size_t a = 0; a < 5; ++a) REQUIRE(std::get<double>(prob.cost(a, 5)) == 0.0);

  const auto sol = solve(prob);
  REQUIRE(sol.pairs.size() == 2);
  REQUIRE(sol.excluded_nodes.size() == 1);

  // Adding the phantom equals choosing the best unit to drop.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t drop = 0; drop < 5; ++drop) {
    std::vector<std::size_t> keep;
    for (std::size_t v = 0; v < 5; ++v)
      if (v != drop) keep.push_back(v);
    const auto bf = oracle::brute_force_min_matching(4, [&](std::size_t a, std::size_t b) {
      return prob.raw_cost(keep[a], keep[b]);
    });
    best = std::min(best, bf.cost);
  }
  REQUIRE(sol.total_cost == Catch::Approx(best).epsilon(1e-14));
}

TEST_CASE("build_problem on four units has six finite edges and no phantom") {
  const auto cohort = cohort_from({{1.0, {0.0}}, {2.0, {1.0}}, {3.0, {3.0}}, {4.0, {6.0}}});
  const auto prob = build_problem(*cohort, fit_covariance(*cohort), {}, nullptr);
  REQUIRE(prob.n_nodes() == 4);
  REQUIRE_FALSE(prob.phantom_node());
  std::size_t finite = 0;
  for (std::size_t a = 0; a < 4; ++a) {
    REQUIRE(prob.forbidden(a, a));
    for (std::size_t b = a + 1; b < 4; ++b) {
      REQUIRE(std::get<double>(prob.cost(a, b)) == std::get<double>(prob.cost(b, a)));
      finite += !prob.forbidden(a, b);
    }
  }
  REQUIRE(finite == 6);
  REQUIRE(prob.forbidden_edge_count() == 0);
}

TEST_CASE("hard caliper marks the offending edge forbidden") {
  // Units 1 and 2 sit far apart on the dose model's covariate but carry the
  // reverse dose order, so their pair probability is extreme.
  const auto cohort = cohort_from({{0.0, {0.0}}, {0.1, {5.0}}, {5.0, {0.0}}, {5.1, {5.0}}});
  const auto gps = GpsModel::model_based([](std::span<const double> x) { return x[0]; }, 1.0);
  DistanceConfig cfg;
  cfg.caliper = CaliperConfig{0.1, CaliperMode::hard, std::nullopt};
  const auto prob = build_problem(*cohort, fit_covariance(*cohort), cfg, &gps);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      const auto p = pair_probability(gps, (*cohort)[a], (*cohort)[b]);
      const bool fires = std::min(p.p_high_first, p.p_high_second) < 0.1;
      REQUIRE(prob.forbidden(a, b) == fires);
    }
  }
  REQUIRE(prob.forbidden(1, 2));
  const auto sol = solve(prob);
  for (auto [a, b] : sol.pairs) REQUIRE_FALSE(prob.forbidden(a, b));
}

TEST_CASE("infeasible hard caliper reports the forbidden edge count") {
  MatchingProblem prob(4);
  prob.set_cost(0, 1, 1.0);
  prob.set_cost(0, 2, 1.0);
  prob.set_cost(0, 3, 1.0);
  prob.set_cost(1, 2, Forbidden{});
  prob.set_cost(1, 3, Forbidden{});
  prob.set_cost(2, 3, Forbidden{});
  try {
    solve(prob);
    FAIL("expected InfeasibleMatching");
  } catch (const InfeasibleMatching& e) {
    REQUIRE(e.forbidden_edges() == 3);
    REQUIRE(std::string(e.what()).find("infeasible matching") != std::string::npos);
  }
}

TEST_CASE("to_pair_set orders doses, drops ties and skips excluded nodes") {
  const auto cohort = cohort_from({{5.0, {0.0}}, {2.0, {1.0}}, {3.0, {0.0}}, {3.0, {1.0}}, {9.0, {2.0}}});
  MatchingSolution sol;
  sol.pairs = {{0, 1}, {2, 3}};
  sol.excluded_nodes = {4};
  const auto conv = to_pair_set(sol, cohort);
  REQUIRE(conv.set.size() == 1);
  REQUIRE(conv.set.pairs[0].low == 1);
  REQUIRE(conv.set.pairs[0].high == 0);
  REQUIRE(conv.set.pairs[0].z_star == 2.0);
  REQUIRE(conv.set.pairs[0].z_dblstar == 5.0);
  REQUIRE(conv.dropped.size() == 1);
  REQUIRE(conv.dropped[0] == std::pair<std::size_t, std::size_t>{2, 3});
  REQUIRE(validate_pair_set(conv.set).empty());
}

TEST_CASE("matching a cohort of 400 finishes and is a valid pair set") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<std::pair<double, std::vector<double>>> rows;
  for (int i = 0; i < 401; ++i) rows.push_back({g(rng), {g(rng), g(rng), g(rng)}});
  const auto res = match_cohort(cohort_from(rows), {}, nullptr);
  REQUIRE(res.solution.pairs.size() == 200);
  REQUIRE(res.solution.excluded_nodes.size() == 1);
  REQUIRE(validate_pair_set(res.pairs.set).empty());
}
