#include "ces/market/phase1.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ces/common/error.hpp"
#include "network.hpp"

namespace ces::market {

using convex::ConicProblem;
using detail::step_label;

double Equilibrium::dlmp_at(int bus, int t) const {
  return dlmp.at(static_cast<std::size_t>(bus - 1)).at(static_cast<std::size_t>(t));
}

namespace {

struct Urgency {
  double u;
  int t_set;
};

Urgency urgency_of(const Scenario& s, int bus, const ders::ShapeableLoadSpec& spec) {
  Urgency out{spec.u, spec.t_set};
  auto it = s.crowdsourcees.find(bus);
  if (it != s.crowdsourcees.end()) {
    if (it->second.preferences.urgency) out.u = *it->second.preferences.urgency;
    if (it->second.preferences.t_set) out.t_set = *it->second.preferences.t_set;
  }
  return out;
}

}  // namespace

Phase1Problem build_cesopf(const Scenario& s) {
  validate(s);
  const auto& f = s.feeder;
  const auto topo = feeder::topology(f);
  const std::size_t n = f.num_buses();
  const int horizon = static_cast<int>(s.horizon);
  const double base = f.base_mva, dt = s.dt;
  const auto& gen = s.generator();
  const double loss_weight = s.loss_price() * base * dt;

  Phase1Problem out;
  ConicProblem& p = out.problem;
  auto& index = out.index;

  // Controllable CT1 devices; variables are allocated up front per bus.
  for (const auto& [bus, dev] : s.devices) {
    if (s.ct_class(bus) != feeder::CtClass::kCt1) continue;
    if (dev.battery) {
      BatteryIndex bi;
      for (int t = 0; t < horizon; ++t) {
        bi.e.push_back(p.add_variable());
        bi.h.push_back(p.add_variable());
        bi.d.push_back(p.add_variable());
      }
      index.battery[bus] = std::move(bi);
    }
    if (dev.shapeable) {
      const auto& sh = *dev.shapeable;
      std::vector<std::size_t> vars(s.horizon, kNoVar);
      for (int t = sh.t_start; t < sh.t_end; ++t) vars[static_cast<std::size_t>(t)] = p.add_variable();
      index.shapeable[bus] = std::move(vars);
    }
  }

  for (int t = 0; t < horizon; ++t) {
    NetworkIndex idx = detail::add_network_step(p, s, topo, t, loss_weight);
    detail::add_generator_cost(p, s, idx.pg, 0.0);
    if (gen.ramp && t > 0) {
      const std::size_t prev = index.net.back().pg;
      p.add_inequality({{idx.pg, 1.0}, {prev, -1.0}}, *gen.ramp / base, step_label("rampup", 1, t));
      p.add_inequality({{idx.pg, -1.0}, {prev, 1.0}}, *gen.ramp / base, step_label("rampdn", 1, t));
    }

    detail::StepInjection inj(n);
    for (std::size_t b = 1; b <= n; ++b) {
      const int bus = static_cast<int>(b);
      inj.p_const[b] = -detail::load_p(s, bus, t) / base;
      inj.q_const[b] = -detail::load_q(s, bus, t) / base;
      const auto ct = s.ct_class(bus);
      if (ct == feeder::CtClass::kCt2) {
        inj.p_const[b] += s.committed(bus, t) / base;
        continue;
      }
      inj.p_const[b] += detail::solar_p(s, bus, t) / base;
      if (auto it = index.battery.find(bus); it != index.battery.end()) {
        inj.p_terms[b].push_back({it->second.d[static_cast<std::size_t>(t)], 1.0});
        inj.p_terms[b].push_back({it->second.h[static_cast<std::size_t>(t)], -1.0});
      }
      if (auto it = index.shapeable.find(bus); it != index.shapeable.end()) {
        const std::size_t sv = it->second[static_cast<std::size_t>(t)];
        if (sv != kNoVar) inj.p_terms[b].push_back({sv, -1.0});
      }
    }
    detail::add_balance_rows(p, s, topo, idx, inj, t);
    index.net.push_back(std::move(idx));
  }

  for (const auto& [bus, bi] : index.battery) {
    const auto& spec = *s.devices.at(bus).battery;
    for (int t = 0; t < horizon; ++t) {
      const auto st = static_cast<std::size_t>(t);
      p.add_bounds(bi.e[st], spec.e_min / base, spec.e_max / base, step_label("bate", bus, t));
      p.add_bounds(bi.h[st], 0.0, spec.p_cha_max / base, step_label("bath", bus, t));
      p.add_bounds(bi.d[st], 0.0, spec.p_dis_max / base, step_label("batd", bus, t));
      convex::LinearExpr row = {{bi.e[st], 1.0}, {bi.h[st], -spec.eta_in * dt}, {bi.d[st], dt / spec.eta_out}};
      double rhs = 0.0;
      if (t == 0) {
        rhs = spec.e_init / base;
      } else {
        row.push_back({bi.e[st - 1], -1.0});
      }
      p.add_equality(std::move(row), rhs, step_label("bat", bus, t));
    }
  }

  for (const auto& [bus, vars] : index.shapeable) {
    const auto& spec = *s.devices.at(bus).shapeable;
    const auto urg = urgency_of(s, bus, spec);
    convex::LinearExpr energy;
    for (int t = 0; t < horizon; ++t) {
      const std::size_t sv = vars[static_cast<std::size_t>(t)];
      const bool penalized = urg.u > 0.0 && t <= urg.t_set;
      if (sv == kNoVar) {
        if (penalized) p.objective().constant += urg.u * spec.s_max * spec.s_max * dt;
        continue;
      }
      p.add_bounds(sv, spec.s_min / base, spec.s_max / base, step_label("shp", bus, t));
      energy.push_back({sv, dt});
      if (penalized) {
        p.objective().add_square(sv, urg.u * base * base * dt);
        p.objective().add_linear(sv, -2.0 * urg.u * spec.s_max * base * dt);
        p.objective().constant += urg.u * spec.s_max * spec.s_max * dt;
      }
    }
    p.add_equality(std::move(energy), spec.e_demand / base, "shpE:" + std::to_string(bus));
  }

  detail::maybe_linearize(p, s);
  for (int t = 0; t < horizon; ++t) detail::add_line_limits(p, s, index.net[static_cast<std::size_t>(t)], t);
  return out;
}

Equilibrium solve_phase1(const Scenario& s) {
  auto built = build_cesopf(s);
  const auto start = std::chrono::steady_clock::now();
  auto sol = convex::solve(built.problem, s.options.solver);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (sol.status != convex::Status::kOptimal) {
    std::ostringstream msg;
    msg << "day-ahead schedule: solver returned " << convex::to_string(sol.status) << " after " << sol.iterations
        << " iterations (primal " << sol.kkt_residuals.primal << ", dual " << sol.kkt_residuals.dual << ", gap "
        << sol.kkt_residuals.gap << ")";
    throw Error(sol.status == convex::Status::kInfeasible ? ErrorCode::kInfeasible : ErrorCode::kSolverFailure,
                msg.str());
  }

  const auto& f = s.feeder;
  const auto topo = feeder::topology(f);
  const std::size_t n = f.num_buses();
  const double base = f.base_mva, dt = s.dt;
  const auto& x = sol.x;

  Equilibrium eq;
  eq.status = sol.status;
  eq.objective = sol.objective_value;
  eq.dlmp.assign(n, std::vector<double>(s.horizon, 0.0));
  auto& diag = eq.diagnostics;
  diag.kkt = sol.kkt_residuals;
  diag.iterations = sol.iterations;
  diag.solve_seconds = seconds;
  for (std::size_t t = 0; t < s.horizon; ++t) {
    const auto& idx = built.index.net[t];
    eq.p_g.push_back(x[idx.pg] * base);
    eq.q_g.push_back(x[idx.qg] * base);
    auto branch = detail::extract_branch(s, topo, idx, x);
    diag.max_relaxation_gap = std::max(diag.max_relaxation_gap, detail::relaxation_gap(s, branch));
    diag.max_balance_residual = std::max(diag.max_balance_residual, detail::balance_residual(s, branch));
    eq.branch.push_back(std::move(branch));
    for (std::size_t b = 1; b <= n; ++b) {
      const int bus = static_cast<int>(b);
      eq.dlmp[b - 1][t] = -sol.dual(step_label("p", bus, static_cast<int>(t))) / (base * dt);
    }
  }
  for (const auto& [bus, bi] : built.index.battery) {
    ders::BatteryTrajectory traj;
    for (std::size_t t = 0; t < s.horizon; ++t) {
      traj.e.push_back(x[bi.e[t]] * base);
      traj.h.push_back(x[bi.h[t]] * base);
      traj.d.push_back(x[bi.d[t]] * base);
      if (traj.h.back() > 1e-6 && traj.d.back() > 1e-6) {
        diag.simultaneous_charge.emplace_back(bus, static_cast<int>(t));
      }
    }
    eq.batteries[bus] = std::move(traj);
  }
  for (const auto& [bus, vars] : built.index.shapeable) {
    std::vector<double> series(s.horizon, 0.0);
    for (std::size_t t = 0; t < s.horizon; ++t) {
      if (vars[t] != kNoVar) series[t] = x[vars[t]] * base;
    }
    eq.shapeable[bus] = std::move(series);
  }
  return eq;
}

}  // namespace ces::market
