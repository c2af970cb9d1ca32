#include "ces/market/phase2.hpp"

#include <algorithm>
#include <cmath>

#include "ces/common/error.hpp"
#include "network.hpp"

namespace ces::market {

using convex::ConicProblem;
using detail::step_label;

double IncentiveOutcome::total_incentive() const {
  double sum = 0.0;
  for (const auto& c : ct2) sum += c.b;
  return sum;
}

HourAheadForecast perfect_forecast(const Scenario& s, int hour) {
  if (hour < 0 || hour >= static_cast<int>(s.horizon)) {
    throw Error(ErrorCode::kOutOfRange, "hour " + std::to_string(hour) + " outside the horizon");
  }
  HourAheadForecast f;
  f.hour = hour;
  for (const auto& [bus, dev] : s.devices) {
    if (dev.load) {
      f.load_p[bus] = detail::load_p(s, bus, hour);
      f.load_q[bus] = detail::load_q(s, bus, hour);
    }
    if (dev.solar) f.solar[bus] = detail::solar_p(s, bus, hour);
  }
  return f;
}

namespace {

void check_forecast(const Scenario& s, const HourAheadForecast& f, int t) {
  if (t < 0 || t >= static_cast<int>(s.horizon)) {
    throw Error(ErrorCode::kOutOfRange, "hour " + std::to_string(t) + " outside the horizon");
  }
  if (f.hour != t) {
    throw Error(ErrorCode::kInvalidArgument,
                "forecast is for hour " + std::to_string(f.hour) + ", requested " + std::to_string(t));
  }
  for (const auto& [bus, dev] : s.devices) {
    if (dev.load && !f.load_p.count(bus)) {
      throw Error(ErrorCode::kNotFound, "missing hour-ahead load forecast for bus " + std::to_string(bus));
    }
    if (dev.solar && !f.solar.count(bus)) {
      throw Error(ErrorCode::kNotFound, "missing hour-ahead solar forecast for bus " + std::to_string(bus));
    }
  }
}

double lookup(const std::map<int, double>& m, int bus) {
  auto it = m.find(bus);
  return it == m.end() ? 0.0 : it->second;
}

double forecast_q(const Scenario& s, const HourAheadForecast& f, int bus) {
  auto it = f.load_q.find(bus);
  return it == f.load_q.end() ? detail::load_q(s, bus, f.hour) : it->second;
}

}  // namespace

std::vector<Ct2Position> ct2_positions(const Scenario& s, const HourAheadForecast& f) {
  const int t = f.hour;
  const auto st = static_cast<std::size_t>(t);
  std::vector<Ct2Position> out;
  for (const auto& [bus, c] : s.crowdsourcees) {
    if (c.ct_class != feeder::CtClass::kCt2) continue;
    const auto& prefs = c.preferences;
    double p_s = 0.0;
    if (prefs.shapeable_schedule) {
      p_s = (*prefs.shapeable_schedule)[st];
    } else if (auto d = s.devices.find(bus); d != s.devices.end() && d->second.shapeable) {
      p_s = asap_schedule(*d->second.shapeable, s.horizon, s.dt)[st];
    }
    const double p_b = prefs.battery_schedule ? (*prefs.battery_schedule)[st] : 0.0;
    const double committed = s.committed(bus, t);
    Ct2Position pos;
    pos.bus = bus;
    pos.willing = !prefs.sell_to_utility.empty() && prefs.sell_to_utility[st];
    pos.p_ni = lookup(f.solar, bus) - p_s + p_b - committed;
    pos.offered = pos.willing ? pos.p_ni : std::min(pos.p_ni, 0.0);
    pos.injection = committed + pos.offered - lookup(f.load_p, bus);
    out.push_back(pos);
  }
  return out;
}

double default_budget(const ders::GeneratorSpec& gen, double surplus_mw, double dt) {
  if (!(surplus_mw > 0.0)) return 0.0;
  return dt * (ders::generation_cost(gen, surplus_mw) - ders::generation_cost(gen, 0.0));
}

double default_budget(const Scenario& s, const Equilibrium&, int t, const HourAheadForecast& f) {
  check_forecast(s, f, t);
  double surplus = 0.0;
  for (const auto& pos : ct2_positions(s, f)) {
    if (pos.willing) surplus += std::max(pos.p_ni, 0.0);
  }
  return default_budget(s.generator(), surplus, s.dt);
}

Phase2Problem build_cesid(const Scenario& s, const Equilibrium& eq, const HourAheadForecast& f, int t) {
  return build_cesid(s, eq, f, t, default_budget(s, eq, t, f));
}

Phase2Problem build_cesid(const Scenario& s, const Equilibrium& eq, const HourAheadForecast& f, int t,
                          double b_total) {
  validate(s);
  check_forecast(s, f, t);
  if (eq.p_g.size() != s.horizon || eq.dlmp.size() != s.feeder.num_buses()) {
    throw Error(ErrorCode::kDimensionMismatch, "equilibrium does not match the scenario");
  }
  const auto topo = feeder::topology(s.feeder);
  const std::size_t n = s.feeder.num_buses();
  const double base = s.feeder.base_mva, dt = s.dt;
  const auto st = static_cast<std::size_t>(t);

  Phase2Problem out;
  out.b_total = b_total;
  ConicProblem& p = out.problem;
  out.net = detail::add_network_step(p, s, topo, t, s.loss_price() * base * dt);
  detail::add_generator_cost(p, s, out.net.pg, eq.p_g[st]);
  out.positions = ct2_positions(s, f);

  detail::StepInjection inj(n);
  for (std::size_t b = 1; b <= n; ++b) {
    const int bus = static_cast<int>(b);
    const auto dev = s.devices.find(bus);
    const bool has_load = dev != s.devices.end() && dev->second.load;
    inj.q_const[b] = has_load ? -forecast_q(s, f, bus) / base : 0.0;
    if (s.ct_class(bus) == feeder::CtClass::kCt2) continue;
    double mw = lookup(f.solar, bus) - lookup(f.load_p, bus);
    if (auto it = eq.batteries.find(bus); it != eq.batteries.end()) mw += it->second.d[st] - it->second.h[st];
    if (auto it = eq.shapeable.find(bus); it != eq.shapeable.end()) mw -= it->second[st];
    inj.p_const[b] = mw / base;
  }
  for (const auto& pos : out.positions) inj.p_const[static_cast<std::size_t>(pos.bus)] = pos.injection / base;
  detail::add_balance_rows(p, s, topo, out.net, inj, t);

  convex::LinearExpr budget;
  const double factor = s.options.lambda_a_max_factor;
  for (const auto& pos : out.positions) {
    if (!pos.willing || !(pos.p_ni > 0.0)) continue;
    const double lam = eq.dlmp_at(pos.bus, t);
    SellerIndex si{pos.bus, p.add_variable(), p.add_variable()};
    p.objective().add_linear(si.b, 1.0);
    p.add_bounds(si.b, 0.0, std::nullopt, "b:" + std::to_string(pos.bus));
    p.add_bounds(si.lambda_a, -lam, -lam + (factor + 1.0) * std::abs(lam), "lama:" + std::to_string(pos.bus));
    // b = P^ni dt (lambda_eq + lambda_a)
    p.add_equality({{si.b, 1.0}, {si.lambda_a, -pos.p_ni * dt}}, pos.p_ni * dt * lam,
                   "pay:" + std::to_string(pos.bus));
    budget.push_back({si.b, -1.0});
    out.sellers.push_back(si);
  }
  if (!budget.empty()) p.add_inequality(std::move(budget), -b_total, "budget");

  detail::maybe_linearize(p, s);
  detail::add_line_limits(p, s, out.net, t);
  return out;
}

IncentiveOutcome solve_phase2(const Scenario& s, const Equilibrium& eq, const HourAheadForecast& f, int t) {
  auto built = build_cesid(s, eq, f, t);
  const double base = s.feeder.base_mva;
  const auto st = static_cast<std::size_t>(t);
  IncentiveOutcome out;
  out.hour = t;
  out.b_total = built.b_total;
  out.p_g_eq = eq.p_g[st];

  auto sol = convex::solve(built.problem, s.options.solver);
  out.status = sol.status;
  if (sol.status != convex::Status::kOptimal) {
    // Rebalance with the generator alone: no incentives, no budget floor.
    out.fallback = true;
    out.note = "incentive solve returned " + std::string(convex::to_string(sol.status)) +
               "; hour rebalanced by the substation generator";
    Scenario quiet = s;
    for (auto& [bus, c] : quiet.crowdsourcees) {
      std::fill(c.preferences.sell_to_utility.begin(), c.preferences.sell_to_utility.end(), false);
    }
    auto gen_only = build_cesid(quiet, eq, f, t, 0.0);
    sol = convex::solve(gen_only.problem, s.options.solver);
    out.status = sol.status;
    if (sol.status != convex::Status::kOptimal) {
      throw Error(sol.status == convex::Status::kInfeasible ? ErrorCode::kInfeasible : ErrorCode::kSolverFailure,
                  "hour " + std::to_string(t) + ": generator-only rebalancing failed (" +
                      std::string(convex::to_string(sol.status)) + ")");
    }
    built.net = gen_only.net;
    built.sellers.clear();
    built.positions = gen_only.positions;
  }

  const auto topo = feeder::topology(s.feeder);
  out.p_g = sol.x[built.net.pg] * base;
  out.q_g = sol.x[built.net.qg] * base;
  out.p_g_deviation = out.p_g - out.p_g_eq;
  out.objective = sol.objective_value;
  out.max_relaxation_gap = detail::relaxation_gap(s, detail::extract_branch(s, topo, built.net, sol.x));

  for (const auto& pos : built.positions) {
    SellerOutcome so;
    so.bus = pos.bus;
    so.willing = pos.willing;
    so.p_ni = pos.p_ni;
    so.lambda_eq = eq.dlmp_at(pos.bus, t);
    // Non-sellers: the price collapses so that b = P^ni (lambda_eq + lambda_a) = 0.
    if (pos.p_ni != 0.0) so.lambda_a = -so.lambda_eq;
    auto it = std::find_if(built.sellers.begin(), built.sellers.end(),
                           [&](const SellerIndex& si) { return si.bus == pos.bus; });
    if (it != built.sellers.end()) {
      so.b = sol.x[it->b];
      so.lambda_a = sol.x[it->lambda_a];
    }
    so.final_price = so.lambda_eq + so.lambda_a;
    out.ct2.push_back(so);
  }
  return out;
}

}  // namespace ces::market
