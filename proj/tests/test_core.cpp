#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "nbp/core.hpp"

using namespace nbp;
using testing_support::consecutive_pairs;
using testing_support::Row;

namespace {

std::shared_ptr<const Cohort> doses(const std::vector<double>& z) {
  std::vector<Row> rows;
  for (double v : z) rows.push_back({v, 0.0, {0.0}});
  return testing_support::cohort(rows);
}

}  // namespace

TEST_CASE("dose_gap_total sums the pair gaps") {
  CHECK(dose_gap_total(consecutive_pairs(doses({0.0, 1.0, 3.0, 5.0}))) == 3.0);
  CHECK(dose_gap_total(consecutive_pairs(doses({0.0, 1.0}))) == 1.0);
  CHECK(dose_gap_total(consecutive_pairs(
            doses({0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5}))) == 2.5);
  MatchedPairSet empty;
  empty.cohort = doses({0.0, 1.0});
  CHECK_THROWS_AS(dose_gap_total(empty), Error);
}

TEST_CASE("make_pair orders by dose and rejects equal doses") {
  const auto c = doses({5.0, 2.0, 2.0});
  const auto p = make_pair(*c, 0, 1);
  CHECK(p.low == 1);
  CHECK(p.high == 0);
  CHECK(p.z_star == 2.0);
  CHECK(p.z_dblstar == 5.0);
  CHECK(p.gap() == 3.0);
  CHECK_THROWS_AS(make_pair(*c, 1, 2), Error);
}

TEST_CASE("validate_pair_set flags each kind of violation") {
  const auto c = doses({0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 2.0, 6.0});
  SECTION("well-formed set") { CHECK(validate_pair_set(consecutive_pairs(c)).empty()); }
  SECTION("equal doses") {
    MatchedPairSet set{{MatchedPair{2, 6, 2.0, 2.0}}, c};
    const auto v = validate_pair_set(set);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == Violation{NonStrictDoseOrder{0}});
  }
  SECTION("unit reused") {
    MatchedPairSet set{{make_pair(*c, 7, 0), make_pair(*c, 7, 1)}, c};
    const auto v = validate_pair_set(set);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == Violation{DuplicateUnit{"u7"}});
  }
  SECTION("index outside the cohort") {
    MatchedPairSet set{{MatchedPair{0, 42, 0.0, 9.0}}, c};
    const auto v = validate_pair_set(set);
    CHECK(std::find(v.begin(), v.end(), Violation{DanglingUnit{0, 42}}) != v.end());
  }
  SECTION("stored dose disagrees with the cohort") {
    MatchedPairSet set{{MatchedPair{0, 1, 0.0, 1.5}}, c};
    const auto v = validate_pair_set(set);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == Violation{DoseMismatch{0}});
  }
  SECTION("empty") {
    MatchedPairSet set{{}, c};
    CHECK(validate_pair_set(set) == std::vector<Violation>{EmptyPairSet{}});
  }
}

TEST_CASE("dose_gap_total ignores pair order and storage orientation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(12);
    for (double& v : z) v = u(rng);
    const auto c = doses(z);
    auto set = consecutive_pairs(c);
    const double base = dose_gap_total(set);

    std::shuffle(set.pairs.begin(), set.pairs.end(), rng);
    CHECK(dose_gap_total(set) == Catch::Approx(base).epsilon(1e-14));

    MatchedPairSet swapped{{}, c};
    for (std::size_t i = 0; i + 1 < z.size(); i += 2) swapped.pairs.push_back(make_pair(*c, i + 1, i));
    CHECK(dose_gap_total(swapped) == base);
  }
}

TEST_CASE("cohort construction validates its input") {
  CHECK_THROWS_AS(testing_support::cohort({{1.0, 0.0, {0.0}}}), Error);
  std::vector<Unit> dup{{"a", 0.0, 0.0, {1.0}}, {"a", 1.0, 0.0, {2.0}}};
  CHECK_THROWS_AS(Cohort(dup, {"x1"}), Error);
  std::vector<Unit> ragged{{"a", 0.0, 0.0, {1.0}}, {"b", 1.0, 0.0, {}}};
  CHECK_THROWS_AS(Cohort(ragged, {"x1"}), Error);
  std::vector<Unit> nan{{"a", 0.0, 0.0, {1.0}}, {"b", std::nan(""), 0.0, {2.0}}};
  CHECK_THROWS_AS(Cohort(nan, {"x1"}), Error);

  const auto c = doses({1.0, 2.0, 3.0});
  CHECK(c->index_of("u2") == std::optional<std::size_t>{2});
  CHECK_FALSE(c->index_of("u9"));
}
