#pragma once

#include "stabkit/network.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stabkit {

enum class Sense { Minimize, Maximize };
enum class Relation { LessEqual, Equal, GreaterEqual };

struct LinearConstraint {
  std::vector<std::pair<std::size_t, double>> terms;  // (variable, coefficient)
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

/// Linear program over box-bounded variables. All bounds must be finite.
class LinearProgram {
 public:
  std::size_t add_variable(double lower, double upper, double objective = 0.0,
                           std::string name = {});
  void add_constraint(LinearConstraint c);
  void add_constraint(std::vector<std::pair<std::size_t, double>> terms, Relation rel,
                      double rhs) {
    add_constraint(LinearConstraint{std::move(terms), rel, rhs});
  }

  std::size_t num_variables() const { return lower_.size(); }
  std::size_t num_constraints() const { return constraints_.size(); }

  Sense sense = Sense::Minimize;

  std::vector<double>& objective() { return objective_; }
  const std::vector<double>& objective() const { return objective_; }
  std::vector<double>& lower() { return lower_; }
  const std::vector<double>& lower() const { return lower_; }
  std::vector<double>& upper() { return upper_; }
  const std::vector<double>& upper() const { return upper_; }
  const std::vector<LinearConstraint>& constraints() const { return constraints_; }
  const std::string& name(std::size_t var) const { return names_.at(var); }

  /// Throws ValidationError on inconsistent or non-finite data.
  void validate() const;

  /// Largest violation of any row or variable bound by `x` (0 when feasible).
  double max_violation(const Vector& x) const;
  double evaluate(const Vector& x) const;

  /// Human-readable LP-format-like listing for debugging.
  std::string dump() const;

 private:
  std::vector<double> objective_;
  std::vector<double> lower_, upper_;
  std::vector<std::string> names_;
  std::vector<LinearConstraint> constraints_;
};

struct SimplexOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  int degenerate_limit = 1000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct SolveStatus {
  enum class Kind { Feasible, Infeasible, TimedOut };
  Kind kind = Kind::Infeasible;
  Vector assignment;  // valid when Feasible
  double objective = 0.0;
  std::size_t iterations = 0;

  bool feasible() const { return kind == Kind::Feasible; }
};

std::string_view to_string(SolveStatus::Kind k);

/// Bounded-variable primal simplex on a dense tableau (two phases).
/// Returns the optimal vertex or Infeasible; throws NumericalError when
/// the final basis fails its residual check.
SolveStatus simplex_solve(const LinearProgram& lp, const SimplexOptions& opts = {});

}  // namespace stabkit
