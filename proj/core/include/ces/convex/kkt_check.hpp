#pragma once

#include "ces/convex/problem.hpp"
#include "ces/convex/solver.hpp"

namespace ces::convex {

// Absolute infinity-norm residuals, recomputed from the problem data and the
// reported primal/dual vectors.
struct KktReport {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double dual_feasibility = 0.0;
  double complementarity = 0.0;

  double max() const;
};

KktReport verify_kkt(const ConicProblem& problem, const Solution& solution);

}  // namespace ces::convex
