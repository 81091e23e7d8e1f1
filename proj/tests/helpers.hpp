#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nbp/core.hpp"

namespace testing_support {

struct Row {
  double z;
  double y;
  std::vector<double> x;
};

// Units get ids "u0", "u1", ... and covariates "x1", "x2", ...
inline std::shared_ptr<const nbp::Cohort> cohort(const std::vector<Row>& rows) {
  std::vector<nbp::Unit> units;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    units.push_back({"u" + std::to_string(i), rows[i].z, rows[i].y, rows[i].x});
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < rows.front().x.size(); ++k) names.push_back("x" + std::to_string(k + 1));
  return std::make_shared<const nbp::Cohort>(std::move(units), std::move(names));
}

// Pairs (2i, 2i+1) for every i.
inline nbp::MatchedPairSet consecutive_pairs(std::shared_ptr<const nbp::Cohort> c) {
  nbp::MatchedPairSet set;
  set.cohort = c;
  for (std::size_t i = 0; i + 1 < c->size(); i += 2) set.pairs.push_back(nbp::make_pair(*c, i, i + 1));
  return set;
}

}  // namespace testing_support
