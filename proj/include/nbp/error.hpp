#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nbp {

enum class ErrorKind {
  invalid_argument,
  data,
  degenerate,
  infeasible,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

// No perfect matching exists over the non-forbidden edges.
class InfeasibleMatching : public Error {
public:
  explicit InfeasibleMatching(std::size_t forbidden_edges)
      : Error(ErrorKind::infeasible,
              "infeasible matching: no perfect matching avoids the " +
                  std::to_string(forbidden_edges) + " forbidden edges"),
        forbidden_edges_(forbidden_edges) {}

  std::size_t forbidden_edges() const noexcept { return forbidden_edges_; }

private:
  std::size_t forbidden_edges_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace nbp
