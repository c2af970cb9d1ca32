#pragma once

#include "ces/convex/problem.hpp"

namespace ces::convex {

// Drops every branch-flow relaxation cone and pins its loss variable to zero,
// leaving a QP. Throws Error{kInvalidArgument} on an untagged cone.
ConicProblem linearize_socp_to_qp(const ConicProblem& problem);

}  // namespace ces::convex
