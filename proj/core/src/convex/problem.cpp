#include "ces/convex/problem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ces/common/error.hpp"

namespace ces::convex {

double evaluate(const LinearExpr& expr, const std::vector<double>& x) {
  double sum = 0.0;
  for (const auto& t : expr) sum += t.coef * x[t.var];
  return sum;
}

void Objective::add_square(std::size_t i, double coef) {
  quad.push_back({i, i, 2.0 * coef});
}

void Objective::add_cross(std::size_t i, std::size_t j, double coef) {
  if (i == j) {
    add_square(i, coef);
    return;
  }
  quad.push_back({std::min(i, j), std::max(i, j), coef});
}

void Objective::add_linear(std::size_t i, double coef) { linear.at(i) += coef; }

ConicProblem::ConicProblem(std::size_t num_vars) {
  objective_.linear.assign(num_vars, 0.0);
}

std::size_t ConicProblem::add_variable() {
  objective_.linear.push_back(0.0);
  return objective_.linear.size() - 1;
}

std::size_t ConicProblem::add_variables(std::size_t count) {
  std::size_t first = objective_.linear.size();
  objective_.linear.resize(first + count, 0.0);
  return first;
}

void ConicProblem::add_equality(LinearExpr a, double b, std::string label) {
  eq_.push_back({std::move(a), b, std::move(label)});
}

void ConicProblem::add_inequality(LinearExpr a, double b, std::string label) {
  ineq_.push_back({std::move(a), b, std::move(label)});
}

void ConicProblem::add_bounds(std::size_t var, std::optional<double> lo,
                              std::optional<double> hi,
                              const std::string& label) {
  auto tag = [&](const char* suffix) { return label.empty() ? std::string() : label + suffix; };
  if (lo && hi && *lo == *hi) {
    add_equality({{var, 1.0}}, *lo, tag(":fix"));
    return;
  }
  if (lo) add_inequality({{var, -1.0}}, -*lo, tag(":lo"));
  if (hi) add_inequality({{var, 1.0}}, *hi, tag(":hi"));
}

void ConicProblem::add_cone(ConeConstraint cone) { soc_.push_back(std::move(cone)); }

double ConicProblem::objective_value(const std::vector<double>& x) const {
  double value = objective_.constant;
  for (std::size_t i = 0; i < x.size(); ++i) value += objective_.linear[i] * x[i];
  for (const auto& q : objective_.quad) {
    double w = q.row == q.col ? 0.5 : 1.0;
    value += w * q.value * x[q.row] * x[q.col];
  }
  return value;
}

namespace {

void check_expr(const LinearExpr& expr, std::size_t n, const std::string& label) {
  for (const auto& t : expr) {
    if (t.var >= n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "constraint '" + label + "' references variable " +
                      std::to_string(t.var) + " of " + std::to_string(n));
    }
    if (!std::isfinite(t.coef)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "constraint '" + label + "' has a non-finite coefficient");
    }
  }
}

bool quad_is_psd(const std::vector<QuadEntry>& quad, std::size_t n) {
  if (quad.empty()) return true;
  bool diagonal = std::all_of(quad.begin(), quad.end(),
                              [](const QuadEntry& q) { return q.row == q.col; });
  if (diagonal) {
    std::vector<double> diag(n, 0.0);
    for (const auto& q : quad) diag[q.row] += q.value;
    return std::all_of(diag.begin(), diag.end(), [](double d) { return d >= 0.0; });
  }
  double scale = 0.0;
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& q : quad) {
    scale = std::max(scale, std::abs(q.value));
    trips.emplace_back(q.row, q.col, q.value);
    if (q.row != q.col) trips.emplace_back(q.col, q.row, q.value);
  }
  double shift = 1e-9 * std::max(1.0, scale);
  for (std::size_t i = 0; i < n; ++i) trips.emplace_back(i, i, shift);
  Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(n),
                                static_cast<Eigen::Index>(n));
  m.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(m);
  if (ldlt.info() != Eigen::Success) return false;
  return (ldlt.vectorD().array() > 0.0).all();
}

}  // namespace

void ConicProblem::validate() const {
  const std::size_t n = num_vars();
  std::unordered_set<std::string> labels;
  auto check_label = [&](const std::string& label) {
    if (label.empty()) return;
    if (!labels.insert(label).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate constraint label '" + label + "'");
    }
  };
  for (const auto& c : eq_) {
    check_expr(c.a, n, c.label);
    check_label(c.label);
  }
  for (const auto& c : ineq_) {
    check_expr(c.a, n, c.label);
    check_label(c.label);
  }
  for (const auto& c : soc_) {
    if (c.rows.size() != c.d.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "cone '" + c.label + "' has mismatched A and d");
    }
    for (const auto& r : c.rows) check_expr(r, n, c.label);
    check_expr(c.g, n, c.label);
    if (c.branch_flow_loss && *c.branch_flow_loss >= n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "cone '" + c.label + "' tags an unknown loss variable");
    }
    check_label(c.label);
  }
  for (const auto& q : objective_.quad) {
    if (q.row >= n || q.col >= n) {
      throw Error(ErrorCode::kDimensionMismatch, "objective entry out of range");
    }
  }
  if (!quad_is_psd(objective_.quad, n)) {
    throw Error(ErrorCode::kNotPositiveSemidefinite,
                "objective quadratic term is not positive semidefinite");
  }
}

}  // namespace ces::convex
