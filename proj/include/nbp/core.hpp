#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "nbp/error.hpp"

namespace nbp {

/// One study unit before matching: observed dose Z, outcome Y, and covariates x.
struct Unit {
  std::string id;
  double dose = 0.0;
  double outcome = 0.0;
  std::vector<double> covariates;
};

/// The pre-matching sample. Immutable once built; the constructor enforces
/// distinct ids, a common covariate dimension, finite dose/outcome and N >= 2.
class Cohort {
public:
  Cohort(std::vector<Unit> units, std::vector<std::string> covariate_names)
      : units_(std::move(units)), names_(std::move(covariate_names)) {
    if (units_.size() < 2) {
      fail(ErrorKind::data, "cohort needs at least 2 units, got " +
                                std::to_string(units_.size()));
    }
    index_.reserve(units_.size());
    for (std::size_t n = 0; n < units_.size(); ++n) {
      const Unit& u = units_[n];
      if (u.covariates.size() != names_.size()) {
        fail(ErrorKind::data, "unit '" + u.id + "' has " +
                                  std::to_string(u.covariates.size()) +
                                  " covariates, expected " +
                                  std::to_string(names_.size()));
      }
      if (!std::isfinite(u.dose) || !std::isfinite(u.outcome)) {
        fail(ErrorKind::data, "unit '" + u.id + "' has a non-finite dose or outcome");
      }
      if (!index_.emplace(u.id, n).second) {
        fail(ErrorKind::data, "duplicate unit id '" + u.id + "'");
      }
    }
  }

  const std::vector<Unit>& units() const noexcept { return units_; }
  const Unit& operator[](std::size_t n) const { return units_[n]; }
  std::size_t size() const noexcept { return units_.size(); }
  std::size_t dim() const noexcept { return names_.size(); }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

private:
  std::vector<Unit> units_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// A matched pair, stored as indices into the source cohort. `low` received
/// z_star, `high` received z_dblstar.
struct MatchedPair {
  std::size_t low = 0;
  std::size_t high = 0;
  double z_star = 0.0;
  double z_dblstar = 0.0;

  double gap() const noexcept { return z_dblstar - z_star; }
};

/// Orders two cohort members into a pair. Equal doses are rejected since a
/// zero-gap pair has no higher-dose unit.
inline MatchedPair make_pair(const Cohort& cohort, std::size_t a, std::size_t b) {
  const double za = cohort[a].dose;
  const double zb = cohort[b].dose;
  if (za == zb) {
    fail(ErrorKind::data, "units '" + cohort[a].id + "' and '" + cohort[b].id +
                              "' have equal doses and cannot form a pair");
  }
  return za < zb ? MatchedPair{a, b, za, zb} : MatchedPair{b, a, zb, za};
}

struct MatchedPairSet {
  std::vector<MatchedPair> pairs;
  std::shared_ptr<const Cohort> cohort;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
  const Unit& low(std::size_t i) const { return (*cohort)[pairs[i].low]; }
  const Unit& high(std::size_t i) const { return (*cohort)[pairs[i].high]; }
};

inline double dose_gap_total(const MatchedPairSet& set) {
  if (set.empty()) fail(ErrorKind::invalid_argument, "no pairs");
  double total = 0.0;
  for (const auto& p : set.pairs) total += p.gap();
  return total;
}

// Violation records.
struct DuplicateUnit {
  std::string unit_id;
  bool operator==(const DuplicateUnit&) const = default;
};
struct NonStrictDoseOrder {
  std::size_t pair_index;
  bool operator==(const NonStrictDoseOrder&) const = default;
};
struct DanglingUnit {
  std::size_t pair_index;
  std::size_t unit_index;
  bool operator==(const DanglingUnit&) const = default;
};
struct DoseMismatch {
  std::size_t pair_index;
  bool operator==(const DoseMismatch&) const = default;
};
struct EmptyPairSet {
  bool operator==(const EmptyPairSet&) const = default;
};

using Violation =
    std::variant<DuplicateUnit, NonStrictDoseOrder, DanglingUnit, DoseMismatch, EmptyPairSet>;

inline std::vector<Violation> validate_pair_set(const MatchedPairSet& set) {
  std::vector<Violation> out;
  if (set.empty()) out.emplace_back(EmptyPairSet{});
  const std::size_t n_units = set.cohort ? set.cohort->size() : 0;

  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> dup_reported;
  auto note_unit = [&](std::size_t u) {
    if (!seen.insert(u).second &&
        std::find(dup_reported.begin(), dup_reported.end(), u) == dup_reported.end()) {
      dup_reported.push_back(u);
      out.emplace_back(DuplicateUnit{u < n_units ? (*set.cohort)[u].id : std::to_string(u)});
    }
  };

  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    const MatchedPair& p = set.pairs[i];
    if (!(p.z_star < p.z_dblstar)) out.emplace_back(NonStrictDoseOrder{i});

    bool dangling = false;
    for (std::size_t u : {p.low, p.high}) {
      if (u >= n_units) {
        out.emplace_back(DanglingUnit{i, u});
        dangling = true;
      }
    }
    note_unit(p.low);
    note_unit(p.high);
    if (!dangling) {
      const auto& c = *set.cohort;
      if (c[p.low].dose != p.z_star || c[p.high].dose != p.z_dblstar) {
        out.emplace_back(DoseMismatch{i});
      }
    }
  }
  return out;
}

}  // namespace nbp
