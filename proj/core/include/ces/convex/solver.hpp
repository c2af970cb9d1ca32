#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ces/convex/problem.hpp"

namespace ces::convex {

enum class Status { kOptimal, kInfeasible, kUnbounded, kMaxIter };

std::string_view to_string(Status status);

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct SolverOptions {
  double tol = 1e-7;
  int max_iter = 200;
  // Tolerance for accepting an infeasibility certificate.
  double infeasibility_tol = 1e-8;
  // Static diagonal regularization of the KKT system.
  double regularization = 1e-9;
  int refinement_steps = 4;
  bool verbose = false;
};

// Multipliers follow the Lagrangian
//   f(x) + sum_eq y (a.x - b) + sum_ineq z (a.x - b) - sum_cone z'(s),
// so inequality multipliers are >= 0 and cone multipliers lie in the cone.
struct Solution {
  Status status = Status::kMaxIter;
  std::vector<double> x;
  std::map<std::string, std::vector<double>> duals;
  // Multipliers for every constraint in problem order, labelled or not.
  std::vector<double> eq_duals;
  std::vector<double> ineq_duals;
  std::vector<std::vector<double>> cone_duals;
  double objective_value = 0.0;
  KktResiduals kkt_residuals;
  int iterations = 0;

  // Scalar multiplier of an equality/inequality row; the first component
  // of a cone multiplier. Throws Error{kNotFound} for unknown labels.
  double dual(const std::string& label) const;
  const std::vector<double>& dual_vector(const std::string& label) const;
};

// Primal-dual interior point method on a homogeneous self-dual embedding with
// Nesterov-Todd scaling and Mehrotra predictor-corrector steps. Pure function
// of its inputs.
Solution solve(const ConicProblem& problem, const SolverOptions& options = {});

}  // namespace ces::convex
