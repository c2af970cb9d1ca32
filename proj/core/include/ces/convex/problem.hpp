#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ces::convex {

struct Term {
  std::size_t var;
  double coef;
};

// Sparse linear form sum(coef * x[var]). Repeated vars are summed.
using LinearExpr = std::vector<Term>;

double evaluate(const LinearExpr& expr, const std::vector<double>& x);

// Entry of the symmetric matrix Q in the objective 0.5 x'Qx. Only one entry
// per unordered pair is stored; (i, j) and (j, i) refer to the same element.
struct QuadEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

struct Objective {
  std::vector<QuadEntry> quad;
  std::vector<double> linear;
  double constant = 0.0;

  // Adds coef * x[i]^2 to the objective.
  void add_square(std::size_t i, double coef);
  // Adds coef * x[i] * x[j] for i != j.
  void add_cross(std::size_t i, std::size_t j, double coef);
  void add_linear(std::size_t i, double coef);
};

// a.x == b (equality) or a.x <= b (inequality).
struct LinearConstraint {
  LinearExpr a;
  double b = 0.0;
  std::string label;
};

// || A x + d || <= g.x + h
struct ConeConstraint {
  std::vector<LinearExpr> rows;
  std::vector<double> d;
  LinearExpr g;
  double h = 0.0;
  std::string label;
  // Set when the cone is a relaxed branch-flow equality; names the squared
  // current variable that the linearized model pins to zero.
  std::optional<std::size_t> branch_flow_loss;
};

class ConicProblem {
 public:
  ConicProblem() = default;
  explicit ConicProblem(std::size_t num_vars);

  std::size_t num_vars() const { return objective_.linear.size(); }
  std::size_t add_variable();
  std::size_t add_variables(std::size_t count);

  Objective& objective() { return objective_; }
  const Objective& objective() const { return objective_; }

  void add_equality(LinearExpr a, double b, std::string label);
  void add_inequality(LinearExpr a, double b, std::string label);
  // Convenience bounds on a single variable; each side becomes an inequality
  // labelled "<label>:lo" / "<label>:hi".
  void add_bounds(std::size_t var, std::optional<double> lo,
                  std::optional<double> hi, const std::string& label);
  void add_cone(ConeConstraint cone);

  const std::vector<LinearConstraint>& equalities() const { return eq_; }
  const std::vector<LinearConstraint>& inequalities() const { return ineq_; }
  const std::vector<ConeConstraint>& cones() const { return soc_; }
  std::vector<LinearConstraint>& mutable_equalities() { return eq_; }
  std::vector<ConeConstraint>& mutable_cones() { return soc_; }

  double objective_value(const std::vector<double>& x) const;

  // Throws Error{kDimensionMismatch} or Error{kNotPositiveSemidefinite} or
  // Error{kDuplicateId} for repeated labels.
  void validate() const;

 private:
  Objective objective_;
  std::vector<LinearConstraint> eq_;
  std::vector<LinearConstraint> ineq_;
  std::vector<ConeConstraint> soc_;
};

}  // namespace ces::convex
