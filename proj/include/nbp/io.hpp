#pragma once

// CSV readers and writers for the command-line tools. Files are plain
// comma-separated text without quoting; numbers are written in the shortest
// form that round-trips.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "nbp/balance.hpp"
#include "nbp/core.hpp"
#include "nbp/estimate.hpp"
#include "nbp/sim.hpp"

namespace nbp::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(ErrorKind::data, source + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(t.header.size()) + " fields, got " +
                                std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(ErrorKind::data, source + ": empty file");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  return parse_csv(in, path.string());
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || s.empty()) {
    fail(ErrorKind::data, context + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Writes `content` to a temporary sibling and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::data, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::data, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(ErrorKind::data, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Dataset: id,z,y,<covariates...>

inline std::shared_ptr<const Cohort> cohort_from_table(const CsvTable& t, const std::string& src) {
  if (t.header.size() < 3 || t.header[0] != "id" || t.header[1] != "z" || t.header[2] != "y") {
    fail(ErrorKind::data, src + ": header must start with id,z,y");
  }
  std::vector<std::string> names(t.header.begin() + 3, t.header.end());
  std::vector<Unit> units;
  units.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    Unit u;
    u.id = r[0];
    const std::string ctx = src + " unit '" + u.id + "'";
    u.dose = parse_double(r[1], ctx);
    u.outcome = parse_double(r[2], ctx);
    for (std::size_t c = 3; c < r.size(); ++c) u.covariates.push_back(parse_double(r[c], ctx));
    units.push_back(std::move(u));
  }
  return std::make_shared<const Cohort>(std::move(units), std::move(names));
}

inline std::shared_ptr<const Cohort> read_dataset(const std::filesystem::path& path) {
  return cohort_from_table(read_csv(path), path.string());
}

inline std::string dataset_csv(const Cohort& cohort) {
  std::ostringstream os;
  os << "id,z,y";
  for (const auto& n : cohort.covariate_names()) os << ',' << n;
  os << '\n';
  for (const auto& u : cohort.units()) {
    os << u.id << ',' << format_double(u.dose) << ',' << format_double(u.outcome);
    for (double x : u.covariates) os << ',' << format_double(x);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Pairs: pair_id,unit_low,unit_high,z_star,z_dblstar,p_high_hat

inline const std::vector<std::string> kPairsHeader{"pair_id", "unit_low", "unit_high",
                                                   "z_star",  "z_dblstar", "p_high_hat"};

/// `p_high` holds the probability for each pair's higher-dose unit, or is
/// empty to leave the column blank.
inline std::string pairs_csv(const MatchedPairSet& set, std::span<const double> p_high = {}) {
  std::ostringstream os;
  for (std::size_t c = 0; c < kPairsHeader.size(); ++c) os << (c ? "," : "") << kPairsHeader[c];
  os << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& p = set.pairs[i];
    os << (i + 1) << ',' << set.low(i).id << ',' << set.high(i).id << ','
       << format_double(p.z_star) << ',' << format_double(p.z_dblstar) << ',';
    if (!p_high.empty()) os << format_double(p_high[i]);
    os << '\n';
  }
  return os.str();
}

inline MatchedPairSet read_pairs(const std::filesystem::path& path,
                                 std::shared_ptr<const Cohort> cohort) {
  const auto t = read_csv(path);
  if (t.header != kPairsHeader) {
    fail(ErrorKind::data, path.string() + ": unexpected pairs header");
  }
  MatchedPairSet set;
  set.cohort = cohort;
  for (const auto& r : t.rows) {
    auto lookup = [&](const std::string& id) {
      const auto idx = cohort->index_of(id);
      if (!idx) fail(ErrorKind::data, path.string() + ": unknown unit id '" + id + "'");
      return *idx;
    };
    set.pairs.push_back(make_pair(*cohort, lookup(r[1]), lookup(r[2])));
  }
  if (set.empty()) fail(ErrorKind::data, path.string() + ": no pairs");
  const auto violations = validate_pair_set(set);
  for (const auto& v : violations) {
    if (auto* d = std::get_if<DuplicateUnit>(&v)) {
      fail(ErrorKind::data, path.string() + ": unit '" + d->unit_id + "' appears in two pairs");
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Density table: unit_id,<id_1>,...,<id_N>; row n holds f(Z_col | x_row).

inline std::vector<double> read_density_table(const std::filesystem::path& path,
                                              const Cohort& cohort) {
  const auto t = read_csv(path);
  const std::size_t n = cohort.size();
  if (t.header.empty() || t.header[0] != "unit_id" || t.header.size() != n + 1) {
    fail(ErrorKind::data, path.string() + ": header must be unit_id followed by " +
                              std::to_string(n) + " unit ids");
  }
  std::vector<std::size_t> col_to_unit(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto idx = cohort.index_of(t.header[c + 1]);
    if (!idx) fail(ErrorKind::data, path.string() + ": unknown unit id '" + t.header[c + 1] + "'");
    col_to_unit[c] = *idx;
  }
  if (t.rows.size() != n) {
    fail(ErrorKind::data, path.string() + ": expected " + std::to_string(n) + " rows");
  }
  std::vector<double> table(n * n, -1.0);
  std::vector<bool> seen(n, false);
  for (const auto& r : t.rows) {
    const auto row = cohort.index_of(r[0]);
    if (!row) fail(ErrorKind::data, path.string() + ": unknown unit id '" + r[0] + "'");
    if (seen[*row]) fail(ErrorKind::data, path.string() + ": duplicate row for '" + r[0] + "'");
    seen[*row] = true;
    for (std::size_t c = 0; c < n; ++c) {
      table[*row * n + col_to_unit[c]] = parse_double(r[c + 1], path.string() + " row '" + r[0] + "'");
    }
  }
  return table;
}

inline std::string density_table_csv(const Cohort& cohort, std::span<const double> table) {
  const std::size_t n = cohort.size();
  std::ostringstream os;
  os << "unit_id";
  for (const auto& u : cohort.units()) os << ',' << u.id;
  os << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    os << cohort[r].id;
    for (std::size_t c = 0; c < n; ++c) os << ',' << format_double(table[r * n + c]);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

inline std::string balance_csv(const BalanceReport& rep) {
  std::ostringstream os;
  os << "covariate,mean_high,mean_low,pooled_sd,std_diff\n";
  for (const auto& r : rep.per_covariate) {
    os << r.name << ',' << format_double(r.mean_high) << ',' << format_double(r.mean_low) << ','
       << format_double(r.pooled_sd) << ',' << format_double(r.std_diff) << '\n';
  }
  return os.str();
}

inline std::string report_csv(const std::vector<EstimateReport>& reports) {
  std::ostringstream os;
  os << "method,estimate,variance,ci_low,ci_high\n";
  for (const auto& r : reports) {
    os << to_string(r.method) << ',' << format_double(r.estimate) << ','
       << format_double(r.variance) << ',' << format_double(r.ci_low) << ','
       << format_double(r.ci_high) << '\n';
  }
  return os.str();
}

inline std::string summary_csv(const sim::SimSummary& s) {
  std::ostringstream os;
  os << "method,mae,rmse,mcil,cr,n_replicates\n";
  for (const auto& m : s.methods) {
    os << to_string(m.method) << ',' << format_double(m.mae) << ',' << format_double(m.rmse) << ','
       << format_double(m.mcil) << ',' << format_double(m.cr) << ',' << s.n_replicates << '\n';
  }
  return os.str();
}

inline std::string replicates_csv(const std::vector<sim::SimReplicateResult>& reps,
                                  const std::vector<EstimatorMethod>& methods) {
  std::ostringstream os;
  os << "replicate,true_lambda,method,estimate,ci_low,ci_high,covered\n";
  for (const auto& r : reps) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& e = r.estimates[m];
      os << r.replicate << ',' << format_double(r.true_lambda) << ',' << to_string(methods[m])
         << ',' << format_double(e.estimate) << ',' << format_double(e.ci_low) << ','
         << format_double(e.ci_high) << ',' << (e.covers(r.true_lambda) ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

}  // namespace nbp::io
