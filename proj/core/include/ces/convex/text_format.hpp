#pragma once

#include <iosfwd>
#include <string>

#include "ces/convex/problem.hpp"

namespace ces::convex {

// Line-oriented dump used for debugging and cross-checking against external
// solvers. Coefficients are written with 17 significant digits so a
// dump/load round trip is exact.
//
//   ces-conic 1
//   vars <n>
//   const <c>
//   lin <i> <c_i>           (nonzeros only)
//   quad <i> <j> <Q_ij>     (i <= j)
//   eq <label> <b> <nnz> <i> <a_i> ...
//   ineq <label> <b> <nnz> <i> <a_i> ...
//   cone <label> <h> <loss|-> <rows>
//     g <nnz> <i> <g_i> ...
//     row <d_k> <nnz> <i> <a_i> ...
//   end
// Empty labels are written as "-".
void dump(const ConicProblem& problem, std::ostream& out);
std::string dump_to_string(const ConicProblem& problem);

// Throws Error{kMalformedDocument} on syntax errors.
ConicProblem load(std::istream& in);
ConicProblem load_from_string(const std::string& text);

}  // namespace ces::convex
