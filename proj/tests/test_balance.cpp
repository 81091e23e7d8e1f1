#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "nbp/balance.hpp"

using namespace nbp;
using testing_support::Row;

TEST_CASE("exactly matched pairs are perfectly balanced") {
  const auto c = testing_support::cohort({{0.0, 0, {1.0, 5.0}},
                                          {1.0, 0, {1.0, 5.0}},
                                          {3.0, 0, {-2.0, 0.5}},
                                          {2.0, 0, {-2.0, 0.5}},
                                          {4.0, 0, {0.3, 1.5}},
                                          {9.0, 0, {0.3, 1.5}}});
  const auto rep = balance_report(testing_support::consecutive_pairs(c));
  REQUIRE(rep.per_covariate.size() == 2);
  for (const auto& r : rep.per_covariate) CHECK(r.std_diff == 0.0);
  CHECK(rep.pass);
  CHECK(rep.max_abs_std_diff == 0.0);
}

TEST_CASE("hand example: high {1,3}, low {0,2}") {
  const auto c = testing_support::cohort(
      {{0.0, 0, {0.0}}, {1.0, 0, {1.0}}, {0.0, 0, {2.0}}, {1.0, 0, {3.0}}});
  const auto rep = balance_report(testing_support::consecutive_pairs(c), 0.2);
  const auto& r = rep.per_covariate[0];
  CHECK(r.name == "x1");
  CHECK(r.mean_high == 2.0);
  CHECK(r.mean_low == 1.0);
  CHECK(r.pooled_sd == Catch::Approx(std::sqrt(2.0)));
  CHECK(r.std_diff == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK_FALSE(rep.pass);
}

TEST_CASE("the threshold is strict") {
  // high {d, d+2}, low {0, 2}: pooled sd sqrt(2), std_diff d / sqrt(2)
  const double d = 0.19 * std::sqrt(2.0);
  const auto c = testing_support::cohort(
      {{0.0, 0, {0.0}}, {1.0, 0, {d}}, {0.0, 0, {2.0}}, {1.0, 0, {d + 2.0}}});
  const auto set = testing_support::consecutive_pairs(c);
  const auto rep = balance_report(set, 0.2);
  CHECK(rep.max_abs_std_diff == Catch::Approx(0.19).epsilon(1e-14));
  CHECK(rep.pass);
  CHECK(rep.threshold == 0.2);
  CHECK_FALSE(balance_report(set, rep.max_abs_std_diff).pass);
}

TEST_CASE("zero spread with a mean difference is infinitely imbalanced") {
  const auto c = testing_support::cohort(
      {{0.0, 0, {1.0}}, {1.0, 0, {2.0}}, {0.0, 0, {1.0}}, {1.0, 0, {2.0}}});
  const auto rep = balance_report(testing_support::consecutive_pairs(c));
  CHECK(std::isinf(rep.per_covariate[0].std_diff));
  CHECK(rep.per_covariate[0].std_diff > 0);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("balance needs two pairs") {
  const auto c = testing_support::cohort({{0.0, 0, {1.0}}, {1.0, 0, {2.0}}});
  CHECK_THROWS_AS(balance_report(testing_support::consecutive_pairs(c)), Error);
}

TEST_CASE("std_diff is affine invariant and flips sign with the labels") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<Row> rows;
    std::vector<Row> affine;
    std::vector<Row> flipped;
    const double a = 0.1 + std::abs(g(rng)) * 5.0;
    const double b = 10.0 * g(rng);
    for (int i = 0; i < 20; ++i) {
      const double x = g(rng);
      const double z = i % 2 == 0 ? 0.0 : 1.0;
      rows.push_back({z, 0, {x}});
      affine.push_back({z, 0, {a * x + b}});
      flipped.push_back({1.0 - z, 0, {x}});
    }
    const double base = balance_report(testing_support::consecutive_pairs(testing_support::cohort(rows)))
                            .per_covariate[0]
                            .std_diff;
    const double aff = balance_report(testing_support::consecutive_pairs(testing_support::cohort(affine)))
                           .per_covariate[0]
                           .std_diff;
    const double flip = balance_report(testing_support::consecutive_pairs(testing_support::cohort(flipped)))
                            .per_covariate[0]
                            .std_diff;
    CHECK(aff == Catch::Approx(base).epsilon(1e-9).margin(1e-12));
    CHECK(flip == Catch::Approx(-base).epsilon(1e-12).margin(1e-15));
  }
}
