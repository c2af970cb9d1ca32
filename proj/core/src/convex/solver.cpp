#include "ces/convex/solver.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ces/common/error.hpp"
#include "cones.hpp"
#include "ldl.hpp"

namespace ces::convex {

std::string_view to_string(Status status) {
  switch (status) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kUnbounded: return "unbounded";
    case Status::kMaxIter: return "max-iter";
  }
  return "unknown";
}

double Solution::dual(const std::string& label) const {
  return dual_vector(label).at(0);
}

const std::vector<double>& Solution::dual_vector(const std::string& label) const {
  auto it = duals.find(label);
  if (it == duals.end()) {
    throw Error(ErrorCode::kNotFound, "no constraint labelled '" + label + "'");
  }
  return it->second;
}

namespace {

using detail::ConeSet;
using detail::Vec;
using Eigen::Index;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline Index ix(std::size_t i) { return static_cast<Index>(i); }

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// min 0.5 x'Px + q'x  s.t.  Ax = b,  Gx + s = h,  s in K.
struct StandardForm {
  std::size_t n = 0, p = 0, m = 0, m_lin = 0;
  SpMat P, A, G;
  Vec q, b, h;
  std::vector<std::size_t> soc_dims;
};

StandardForm to_standard_form(const ConicProblem& problem) {
  StandardForm sf;
  sf.n = problem.num_vars();
  sf.p = problem.equalities().size();
  sf.m_lin = problem.inequalities().size();
  sf.m = sf.m_lin;
  for (const auto& c : problem.cones()) {
    sf.soc_dims.push_back(c.rows.size() + 1);
    sf.m += c.rows.size() + 1;
  }

  std::vector<Triplet> trips;
  for (const auto& q : problem.objective().quad) {
    trips.emplace_back(q.row, q.col, q.value);
    if (q.row != q.col) trips.emplace_back(q.col, q.row, q.value);
  }
  sf.P.resize(ix(sf.n), ix(sf.n));
  sf.P.setFromTriplets(trips.begin(), trips.end());
  sf.q = Eigen::Map<const Vec>(problem.objective().linear.data(), ix(sf.n));

  trips.clear();
  sf.b.resize(ix(sf.p));
  for (std::size_t r = 0; r < sf.p; ++r) {
    const auto& c = problem.equalities()[r];
    for (const auto& t : c.a) trips.emplace_back(r, t.var, t.coef);
    sf.b[ix(r)] = c.b;
  }
  sf.A.resize(ix(sf.p), ix(sf.n));
  sf.A.setFromTriplets(trips.begin(), trips.end());

  trips.clear();
  sf.h.resize(ix(sf.m));
  std::size_t row = 0;
  for (const auto& c : problem.inequalities()) {
    for (const auto& t : c.a) trips.emplace_back(row, t.var, t.coef);
    sf.h[ix(row)] = c.b;
    ++row;
  }
  for (const auto& c : problem.cones()) {
    for (const auto& t : c.g) trips.emplace_back(row, t.var, -t.coef);
    sf.h[ix(row)] = c.h;
    ++row;
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      for (const auto& t : c.rows[k]) trips.emplace_back(row, t.var, -t.coef);
      sf.h[ix(row)] = c.d[k];
      ++row;
    }
  }
  sf.G.resize(ix(sf.m), ix(sf.n));
  sf.G.setFromTriplets(trips.begin(), trips.end());
  return sf;
}

// Quasi-definite KKT system
//   [ P + dI   A'    G'          ]
//   [ A       -dI    0           ]
//   [ G        0    -(W'W + dI)  ]
// factored by sparse LDL' with fill-reducing ordering; solves refine against
// the unregularized operator.
class KktSystem {
 public:
  KktSystem(const StandardForm& sf, double reg, int refine)
      : sf_(sf), reg_(reg), refine_(refine) {
    const std::size_t n = sf.n, p = sf.p;
    for (Index k = 0; k < sf.P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(sf.P, k); it; ++it) {
        if (it.row() >= it.col()) static_.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (std::size_t i = 0; i < n; ++i) static_.emplace_back(i, i, reg);
    for (Index k = 0; k < sf.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(sf.A, k); it; ++it) {
        static_.emplace_back(ix(n) + it.row(), it.col(), it.value());
      }
    }
    for (std::size_t i = 0; i < p; ++i) static_.emplace_back(n + i, n + i, -reg);
    for (Index k = 0; k < sf.G.outerSize(); ++k) {
      for (SpMat::InnerIterator it(sf.G, k); it; ++it) {
        static_.emplace_back(ix(n + p) + it.row(), it.col(), it.value());
      }
    }
    dim_ = n + p + sf.m;
    signs_.assign(dim_, -1);
    std::fill(signs_.begin(), signs_.begin() + static_cast<std::ptrdiff_t>(n), 1);
  }

  bool factor(const ConeSet& cones) {
    cones_ = &cones;
    std::vector<Triplet> trips = static_;
    const std::size_t off = sf_.n + sf_.p;
    cones.for_each_wtw([&](std::size_t r, std::size_t c, double v) {
      trips.emplace_back(off + r, off + c, -v);
    });
    for (std::size_t i = 0; i < sf_.m; ++i) trips.emplace_back(off + i, off + i, -reg_);
    SpMat k(ix(dim_), ix(dim_));
    k.setFromTriplets(trips.begin(), trips.end());
    ldl_.factor(k, signs_, kPivotEps, kPivotDelta);
    return true;
  }

  Vec solve(const Vec& rhs) const {
    Vec sol = ldl_.solve(rhs);
    Vec res = rhs - multiply(sol);
    double err = inf_norm(res);
    for (int it = 0; it < refine_; ++it) {
      if (err <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      Vec trial = sol + ldl_.solve(res);
      Vec trial_res = rhs - multiply(trial);
      const double trial_err = inf_norm(trial_res);
      if (trial_err >= err) break;
      sol = std::move(trial);
      res = std::move(trial_res);
      err = trial_err;
    }
    return sol;
  }

 private:
  Vec multiply(const Vec& v) const {
    const Index n = ix(sf_.n), p = ix(sf_.p), m = ix(sf_.m);
    const auto x = v.head(n);
    const auto y = v.segment(n, p);
    const auto z = v.tail(m);
    Vec out(v.size());
    out.head(n) = sf_.P * x + sf_.A.transpose() * y + sf_.G.transpose() * z;
    out.segment(n, p) = sf_.A * x;
    out.tail(m) = sf_.G * x - cones_->apply_wtw(z);
    return out;
  }

  const StandardForm& sf_;
  double reg_;
  int refine_;
  std::size_t dim_ = 0;
  std::vector<Triplet> static_;
  static constexpr double kPivotEps = 1e-13;
  static constexpr double kPivotDelta = 2e-7;
  const ConeSet* cones_ = nullptr;
  std::vector<int> signs_;
  detail::QuasiDefiniteLdl ldl_;
};

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0, kappa = 1.0;
};

struct Direction {
  Vec dx, dy, dz, ds;
  double dtau = 0.0, dkappa = 0.0;
};

struct Residuals {
  Vec rx, ry, rz;
  double rtau = 0.0;
};

void shift_into_cone(const ConeSet& cones, Vec& u) {
  double alpha = -cones.min_eigenvalue(u);
  if (u.size() == 0) return;
  if (alpha >= -1e-8) u += (1.0 + std::max(alpha, 0.0)) * cones.identity();
}

Solution make_solution(const ConicProblem& problem, const StandardForm& sf,
                       const Iterate& it, Status status, int iterations,
                       const KktResiduals& res) {
  Solution sol;
  sol.status = status;
  sol.iterations = iterations;
  sol.kkt_residuals = res;
  // Optimal and max-iter iterates are reported in the original scale;
  // certificates are reported as raw directions.
  double scale = (status == Status::kOptimal || status == Status::kMaxIter) ? 1.0 / it.tau : 1.0;
  sol.x.resize(sf.n);
  for (std::size_t i = 0; i < sf.n; ++i) sol.x[i] = it.x[ix(i)] * scale;
  sol.eq_duals.resize(sf.p);
  for (std::size_t r = 0; r < sf.p; ++r) {
    sol.eq_duals[r] = it.y[ix(r)] * scale;
    const auto& label = problem.equalities()[r].label;
    if (!label.empty()) sol.duals[label] = {sol.eq_duals[r]};
  }
  sol.ineq_duals.resize(sf.m_lin);
  for (std::size_t r = 0; r < sf.m_lin; ++r) {
    sol.ineq_duals[r] = it.z[ix(r)] * scale;
    const auto& label = problem.inequalities()[r].label;
    if (!label.empty()) sol.duals[label] = {sol.ineq_duals[r]};
  }
  std::size_t row = sf.m_lin;
  for (const auto& c : problem.cones()) {
    std::size_t dim = c.rows.size() + 1;
    std::vector<double> v(dim);
    for (std::size_t k = 0; k < dim; ++k) v[k] = it.z[ix(row + k)] * scale;
    if (!c.label.empty()) sol.duals[c.label] = v;
    sol.cone_duals.push_back(std::move(v));
    row += dim;
  }
  sol.objective_value = problem.objective_value(sol.x);
  return sol;
}

}  // namespace

Solution solve(const ConicProblem& problem, const SolverOptions& options) {
  problem.validate();
  const StandardForm sf = to_standard_form(problem);
  const Index n = ix(sf.n), p = ix(sf.p), m = ix(sf.m);

  ConeSet cones(sf.m_lin, sf.soc_dims);
  KktSystem kkt(sf, options.regularization, options.refinement_steps);

  auto split = [&](const Vec& v, Vec& x, Vec& y, Vec& z) {
    x = v.head(n);
    y = v.segment(n, p);
    z = v.tail(m);
  };

  // Initial point: W = I, then shift s and z into the cone interior.
  Iterate it;
  Vec lambda;
  {
    Vec s0 = cones.identity(), z0 = cones.identity();
    cones.update_scaling(s0, z0, lambda);
    if (!kkt.factor(cones)) {
      throw Error(ErrorCode::kSolverFailure, "initial KKT factorization failed");
    }
    Vec rhs(n + p + m);
    rhs << -sf.q, sf.b, sf.h;
    Vec sol = kkt.solve(rhs);
    split(sol, it.x, it.y, it.z);
    it.s = -it.z;
    shift_into_cone(cones, it.s);
    shift_into_cone(cones, it.z);
    it.tau = 1.0;
    it.kappa = 1.0;
  }

  const double nu = cones.degree();
  const double norm_b = inf_norm(sf.b), norm_h = inf_norm(sf.h), norm_q = inf_norm(sf.q);
  KktResiduals report{};
  Status status = Status::kMaxIter;
  int iter = 0;

  auto residuals = [&](const Iterate& w, Residuals& r, double& xpx) {
    Vec px = sf.P * w.x;
    xpx = w.x.dot(px);
    r.rx = px + sf.A.transpose() * w.y + sf.G.transpose() * w.z + sf.q * w.tau;
    r.ry = sf.A * w.x - sf.b * w.tau;
    r.rz = sf.G * w.x + w.s - sf.h * w.tau;
    r.rtau = w.kappa + sf.q.dot(w.x) + sf.b.dot(w.y) + sf.h.dot(w.z) + xpx / w.tau;
  };

  auto worst = [](const KktResiduals& k) { return std::max({k.primal, k.dual, k.gap}); };
  auto converged = [&](const KktResiduals& k) { return worst(k) <= options.tol; };
  Iterate best = it;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  KktResiduals best_report{kInf, kInf, kInf};

  for (iter = 0; iter <= options.max_iter; ++iter) {
    Residuals r;
    double xpx = 0.0;
    residuals(it, r, xpx);

    // Convergence test on the de-homogenized point.
    const double inv_tau = 1.0 / it.tau;
    Vec xh = it.x * inv_tau;
    Vec px = sf.P * xh;
    const double pobj = 0.5 * xh.dot(px) + sf.q.dot(xh);
    const double dobj = -0.5 * xh.dot(px) - sf.b.dot(it.y * inv_tau) - sf.h.dot(it.z * inv_tau);
    const double pres_scale = std::max({1.0, norm_b, norm_h, inf_norm(xh)});
    const double dres_scale = std::max({1.0, norm_q, inf_norm(px)});
    report.primal = std::max(inf_norm(r.ry), inf_norm(r.rz)) * inv_tau / pres_scale;
    report.dual = inf_norm(r.rx) * inv_tau / dres_scale;
    const double gap_abs = std::abs(pobj - dobj);
    report.gap = std::min(gap_abs, gap_abs / std::max(1.0, std::min(std::abs(pobj), std::abs(dobj))));

    if (options.verbose) {
      std::fprintf(stderr, "%3d pobj=% .8e dobj=% .8e pres=%.2e dres=%.2e gap=%.2e tau=%.2e kap=%.2e\n",
                   iter, pobj, dobj, report.primal, report.dual, report.gap, it.tau, it.kappa);
    }
    if (!std::isfinite(report.primal) || !std::isfinite(report.dual) || !std::isfinite(report.gap)) {
      // Numerical breakdown near the optimum: fall back to the best point seen.
      it = best;
      report = best_report;
      status = converged(report) ? Status::kOptimal : Status::kMaxIter;
      break;
    }
    if (converged(report)) {
      status = Status::kOptimal;
      break;
    }
    if (worst(report) < worst(best_report)) {
      best = it;
      best_report = report;
    }

    // Infeasibility certificates, only trusted once kappa dominates tau.
    if (it.kappa >= it.tau) {
      const double bz = sf.b.dot(it.y) + sf.h.dot(it.z);
      if (bz < 0.0) {
        Vec aty = sf.A.transpose() * it.y + sf.G.transpose() * it.z;
        if (inf_norm(aty) <= options.infeasibility_tol * -bz) {
          status = Status::kInfeasible;
          report.primal = inf_norm(aty) / -bz;
          break;
        }
      }
      const double qx = sf.q.dot(it.x);
      if (qx < 0.0) {
        Vec pxr = sf.P * it.x;
        const double lim = options.infeasibility_tol * -qx;
        if (inf_norm(pxr) <= lim && inf_norm(sf.A * it.x) <= lim &&
            inf_norm(sf.G * it.x + it.s) <= lim) {
          status = Status::kUnbounded;
          report.dual = inf_norm(pxr) / -qx;
          break;
        }
      }
    }
    if (iter == options.max_iter) {
      it = best;
      report = best_report;
      break;
    }

    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / (nu + 1.0);
    cones.update_scaling(it.s, it.z, lambda);
    if (!kkt.factor(cones)) {
      status = Status::kMaxIter;
      break;
    }

    // Direction for the tau column.
    Vec x2, y2, z2;
    {
      Vec rhs(n + p + m);
      rhs << -sf.q, sf.b, sf.h;
      split(kkt.solve(rhs), x2, y2, z2);
    }
    const Vec qt = sf.q + (2.0 * inv_tau) * (sf.P * it.x);
    const double denom = -it.kappa / it.tau + qt.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2) -
                         xpx / (it.tau * it.tau);

    auto compute = [&](double sigma, const Vec& cs, double ctau) {
      // cs: complementarity target, W^{-T}ds + W dz = lambda \ cs.
      // ctau: target of kappa dtau + tau dkappa.
      Direction d;
      const Vec ws = cones.apply_w(cones.jordan_divide(lambda, cs));
      Vec rhs(n + p + m);
      rhs << -(1.0 - sigma) * r.rx, -(1.0 - sigma) * r.ry, -(1.0 - sigma) * r.rz - ws;
      Vec x1, y1, z1;
      split(kkt.solve(rhs), x1, y1, z1);
      const double num = -(1.0 - sigma) * r.rtau - ctau / it.tau - qt.dot(x1) - sf.b.dot(y1) -
                         sf.h.dot(z1);
      d.dtau = num / denom;
      d.dx = x1 + d.dtau * x2;
      d.dy = y1 + d.dtau * y2;
      d.dz = z1 + d.dtau * z2;
      d.ds = ws - cones.apply_wtw(d.dz);
      d.dkappa = (ctau - it.kappa * d.dtau) / it.tau;
      return d;
    };

    auto step_length = [&](const Direction& d) {
      double a = cones.max_step(it.s, d.ds, 1e10);
      a = cones.max_step(it.z, d.dz, a);
      if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
      return a;
    };

    // Predictor.
    const Vec ll = cones.jordan_product(lambda, lambda);
    Direction aff = compute(0.0, -ll, -it.tau * it.kappa);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::pow(1.0 - alpha_aff, 3);

    // Corrector with second-order term.
    const Vec eta = cones.jordan_product(cones.apply_w_inv(aff.ds), cones.apply_w(aff.dz));
    const Vec cs = sigma * mu * cones.identity() - ll - eta;
    const double ctau = sigma * mu - it.tau * it.kappa - aff.dtau * aff.dkappa;
    Direction dir = compute(sigma, cs, ctau);
    const double alpha = std::min(1.0, 0.99 * step_length(dir));

    it.x += alpha * dir.dx;
    it.y += alpha * dir.dy;
    it.z += alpha * dir.dz;
    it.s += alpha * dir.ds;
    it.tau += alpha * dir.dtau;
    it.kappa += alpha * dir.dkappa;

    // Keep the embedding normalized to avoid drift of tau/kappa.
    const double norm = std::max(it.tau, it.kappa);
    if (norm > 1e6 || norm < 1e-6) {
      it.x /= norm;
      it.y /= norm;
      it.z /= norm;
      it.s /= norm;
      it.tau /= norm;
      it.kappa /= norm;
    }
  }

  return make_solution(problem, sf, it, status, iter, report);
}

}  // namespace ces::convex
