#include "ces/convex/kkt_check.hpp"

#include <algorithm>
#include <cmath>

namespace ces::convex {

double KktReport::max() const {
  return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
}

KktReport verify_kkt(const ConicProblem& problem, const Solution& solution) {
  KktReport report;
  const std::size_t n = problem.num_vars();
  const auto& x = solution.x;
  if (x.size() != n) {
    report.stationarity = report.primal_feasibility = INFINITY;
    return report;
  }
  auto dual_at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? v[i] : 0.0;
  };

  std::vector<double> grad(problem.objective().linear);
  for (const auto& q : problem.objective().quad) {
    if (q.row == q.col) {
      grad[q.row] += q.value * x[q.row];
    } else {
      grad[q.row] += q.value * x[q.col];
      grad[q.col] += q.value * x[q.row];
    }
  }

  for (std::size_t r = 0; r < problem.equalities().size(); ++r) {
    const auto& c = problem.equalities()[r];
    const double y = dual_at(solution.eq_duals, r);
    for (const auto& t : c.a) grad[t.var] += y * t.coef;
    report.primal_feasibility =
        std::max(report.primal_feasibility, std::abs(evaluate(c.a, x) - c.b));
  }
  for (std::size_t r = 0; r < problem.inequalities().size(); ++r) {
    const auto& c = problem.inequalities()[r];
    const double z = dual_at(solution.ineq_duals, r);
    for (const auto& t : c.a) grad[t.var] += z * t.coef;
    const double slack = c.b - evaluate(c.a, x);
    report.primal_feasibility = std::max(report.primal_feasibility, std::max(-slack, 0.0));
    report.dual_feasibility = std::max(report.dual_feasibility, std::max(-z, 0.0));
    report.complementarity = std::max(report.complementarity, std::abs(z * slack));
  }
  for (std::size_t k = 0; k < problem.cones().size(); ++k) {
    const auto& c = problem.cones()[k];
    std::vector<double> z(c.rows.size() + 1, 0.0);
    if (k < solution.cone_duals.size() && solution.cone_duals[k].size() == z.size()) {
      z = solution.cone_duals[k];
    }
    for (const auto& t : c.g) grad[t.var] -= z[0] * t.coef;
    double s0 = evaluate(c.g, x) + c.h;
    double s1_norm2 = 0.0, z1_norm2 = 0.0, sz = s0 * z[0];
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
      for (const auto& t : c.rows[i]) grad[t.var] -= z[i + 1] * t.coef;
      const double si = evaluate(c.rows[i], x) + c.d[i];
      s1_norm2 += si * si;
      z1_norm2 += z[i + 1] * z[i + 1];
      sz += si * z[i + 1];
    }
    report.primal_feasibility =
        std::max(report.primal_feasibility, std::max(std::sqrt(s1_norm2) - s0, 0.0));
    report.dual_feasibility =
        std::max(report.dual_feasibility, std::max(std::sqrt(z1_norm2) - z[0], 0.0));
    report.complementarity = std::max(report.complementarity, std::abs(sz));
  }
  for (double g : grad) report.stationarity = std::max(report.stationarity, std::abs(g));
  return report;
}

}  // namespace ces::convex
