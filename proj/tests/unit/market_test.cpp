#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ces/common/error.hpp"
#include "ces/convex/transform.hpp"
#include "ces/ders/devices.hpp"
#include "ces/market/phase1.hpp"
#include "ces/market/phase2.hpp"
#include "market_fixtures.hpp"

using namespace ces;
using ces::testing::add_crowdsourcee;
using ces::testing::flat;
using ces::testing::small_scenario;

namespace {

// Line 1-2 serving load P (p.u.) with Q = 0. The child-end flow is -P, so
// 1 = v2 + 2 r P + |z|^2 l and l = P^2 / v2.
double two_bus_current(double p_load, double r, double x) {
  const double z2 = r * r + x * x;
  double l = p_load * p_load;
  for (int k = 0; k < 200; ++k) {
    const double v2 = 1.0 - 2.0 * r * p_load - z2 * l;
    l = p_load * p_load / v2;
  }
  return l;
}

market::Scenario two_bus_load(double mw, std::size_t horizon = 3) {
  auto s = small_scenario(2, horizon);
  s.devices[2].load = flat(2, ders::ProfileKind::kUncontrollableLoad, horizon, mw);
  return s;
}

}  // namespace

TEST(Phase1, TwoBusMatchesHandSolution) {
  auto s = two_bus_load(1.0);
  auto eq = market::solve_phase1(s);
  const double l = two_bus_current(1.0, 0.01, 0.02);
  for (std::size_t t = 0; t < s.horizon; ++t) {
    EXPECT_NEAR(eq.p_g[t], 1.0 + 0.01 * l, 1e-6);
    EXPECT_NEAR(eq.q_g[t], 0.02 * l, 1e-6);
    EXPECT_NEAR(eq.branch[t].l[2], l, 1e-6);
  }
  EXPECT_LE(eq.diagnostics.max_relaxation_gap, 1e-6);
  EXPECT_LE(eq.diagnostics.max_balance_residual, 1e-6);
}

TEST(Phase1, ZeroLoadCostsOnlyFixedTerm) {
  auto s = small_scenario(3, 4);
  auto eq = market::solve_phase1(s);
  for (double pg : eq.p_g) EXPECT_NEAR(pg, 0.0, 1e-6);
  EXPECT_NEAR(eq.objective, 4 * 3.0, 1e-5);
}

TEST(Phase1, LosslessDlmpIsMarginalCost) {
  auto s = two_bus_load(0.7);
  s.options.lindistflow = true;
  auto eq = market::solve_phase1(s);
  const auto& g = s.generator();
  for (std::size_t t = 0; t < s.horizon; ++t) {
    EXPECT_NEAR(eq.p_g[t], 0.7, 1e-6);
    const double mc = 2.0 * g.alpha * eq.p_g[t] + g.beta;
    EXPECT_NEAR(eq.dlmp_at(1, static_cast<int>(t)), mc, 1e-4);
    EXPECT_NEAR(eq.dlmp_at(2, static_cast<int>(t)), mc, 1e-4);
  }
}

TEST(Phase1, LoadBusDlmpMatchesFiniteDifference) {
  const double h = 1e-4;
  auto base = two_bus_load(0.8, 1);
  auto up = two_bus_load(0.8 + h, 1);
  auto dn = two_bus_load(0.8 - h, 1);
  const double fd = (market::solve_phase1(up).objective - market::solve_phase1(dn).objective) / (2 * h);
  auto eq = market::solve_phase1(base);
  EXPECT_NEAR(eq.dlmp_at(2, 0), fd, 1e-3 * std::abs(fd));
  EXPECT_GT(eq.dlmp_at(2, 0), eq.dlmp_at(1, 0));
}

TEST(Phase1, LinearizedObjectiveNotAboveRelaxation) {
  auto s = two_bus_load(1.2);
  auto socp = market::solve_phase1(s);
  s.options.lindistflow = true;
  auto qp = market::solve_phase1(s);
  EXPECT_LE(qp.objective, socp.objective + 1e-7);
}

TEST(Phase1, IdenticalScenariosGiveIdenticalEquilibria) {
  auto s = two_bus_load(0.6, 4);
  add_crowdsourcee(s, 2, feeder::CtClass::kCt1);
  ders::BatterySpec b{2, 0.95, 0.95, 0.3, 0.3, 0.0, 1.0, 0.2};
  s.devices[2].battery = b;
  auto a = market::solve_phase1(s);
  auto c = market::solve_phase1(s);
  EXPECT_EQ(a.p_g, c.p_g);
  EXPECT_EQ(a.dlmp, c.dlmp);
  EXPECT_EQ(a.batteries.at(2).e, c.batteries.at(2).e);
}

TEST(Phase1, TradeIsPinnedAsConstantSchedule) {
  auto s = small_scenario(3, 24);
  s.devices[2].load = flat(2, ders::ProfileKind::kUncontrollableLoad, 24, 0.05);
  s.devices[3].load = flat(3, ders::ProfileKind::kUncontrollableLoad, 24, 0.05);
  add_crowdsourcee(s, 2, feeder::CtClass::kCt2);
  add_crowdsourcee(s, 3, feeder::CtClass::kCt2);
  ders::TradeRequest tr;
  tr.id = "t1";
  tr.seller_bus = 3;
  tr.buyer_bus = 2;
  tr.ett_type = ders::EttType::kB;
  tr.window_start = 9;
  tr.window_end = 14;
  tr.energy = 0.119;
  s.trades.push_back(tr);
  auto eq = market::solve_phase1(s);
  for (int t = 0; t < 24; ++t) {
    const bool on = t >= 9 && t < 14;
    EXPECT_NEAR(s.committed(3, t), on ? 0.0238 : 0.0, 1e-12);
    EXPECT_NEAR(s.committed(2, t), on ? -0.0238 : 0.0, 1e-12);
    const auto& br = eq.branch[static_cast<std::size_t>(t)];
    EXPECT_NEAR(br.p[3], (on ? 0.0238 : 0.0) - 0.05, 1e-7);
    EXPECT_NEAR(br.p[2], (on ? -0.0238 : 0.0) - 0.05, 1e-7);
  }
}

TEST(Phase1, BatteryScheduleIsFeasibleAndShiftsLoad) {
  auto s = small_scenario(2, 6);
  s.devices[2].load = {2, ders::ProfileKind::kUncontrollableLoad, {0.2, 0.2, 0.9, 0.9, 0.2, 0.2}, std::nullopt};
  add_crowdsourcee(s, 2, feeder::CtClass::kCt1);
  ders::BatterySpec b{2, 0.95, 0.95, 0.3, 0.3, 0.0, 1.0, 0.2};
  s.devices[2].battery = b;
  auto eq = market::solve_phase1(s);
  const auto& traj = eq.batteries.at(2);
  auto report = ders::battery_feasible(b, traj, s.dt, 1e-6);
  EXPECT_TRUE(report.ok) << (report.violation ? report.violation->constraint : "");
  EXPECT_LT(eq.p_g[2], 0.9);
  EXPECT_GT(eq.p_g[0], 0.2);
  EXPECT_LE(eq.diagnostics.max_relaxation_gap, 1e-5);
}

TEST(Phase1, ShapeableDemandMetInsideWindow) {
  auto s = small_scenario(2, 6);
  s.devices[2].load = flat(2, ders::ProfileKind::kUncontrollableLoad, 6, 0.3);
  add_crowdsourcee(s, 2, feeder::CtClass::kCt1);
  ders::ShapeableLoadSpec sh{2, 1.0, 1, 5, 0.1, 0.5, 0.0, -1};
  s.devices[2].shapeable = sh;
  auto eq = market::solve_phase1(s);
  const auto& sched = eq.shapeable.at(2);
  EXPECT_TRUE(ders::shapeable_feasible(sh, sched, s.dt, 1e-6).ok);
}

TEST(Phase1, InfeasibleWindowRejectedAtBuild) {
  auto s = small_scenario(2, 6);
  add_crowdsourcee(s, 2, feeder::CtClass::kCt1);
  s.devices[2].shapeable = ders::ShapeableLoadSpec{2, 5.0, 1, 3, 0.0, 0.5, 0.0, -1};
  EXPECT_THROW(market::build_cesopf(s), Error);
}

namespace {

// Lossless 2-bus objective of a shapeable schedule (MW), used by the grid oracle.
double lossless_cost(const market::Scenario& s, const std::vector<double>& sched, double u, int t_set) {
  const auto& g = s.generator();
  const auto& sh = *s.devices.at(2).shapeable;
  double cost = 0.0;
  for (std::size_t t = 0; t < s.horizon; ++t) {
    cost += s.dt * ders::generation_cost(g, s.devices.at(2).load->values[t] + sched[t]);
    const bool in = static_cast<int>(t) >= sh.t_start && static_cast<int>(t) < sh.t_end;
    if (static_cast<int>(t) <= t_set) {
      const double gap = (in ? sched[t] : 0.0) - sh.s_max;
      cost += u * gap * gap * s.dt;
    }
  }
  return cost;
}

}  // namespace

TEST(Phase1, UrgencyMonotoneAgainstGridOracle) {
  auto s = small_scenario(2, 4);
  s.options.lindistflow = true;
  s.devices[2].load = {2, ders::ProfileKind::kUncontrollableLoad, {0.5, 0.2, 0.8, 0.4}, std::nullopt};
  add_crowdsourcee(s, 2, feeder::CtClass::kCt1);
  const int t_set = 1;
  const double e = 1.2, smax = 0.8, step = 0.0025;
  double prev_solver = -1.0, prev_grid = -1.0;
  for (double u : {0.0, 0.05, 0.2, 0.5, 1.0}) {
    s.devices[2].shapeable = ders::ShapeableLoadSpec{2, e, 0, 3, 0.0, smax, u, t_set};
    auto eq = market::solve_phase1(s);
    const auto& sched = eq.shapeable.at(2);
    const double early = sched[0] + sched[1];

    double best = 1e300, best_early = 0.0;
    for (double a = 0.0; a <= smax + 1e-12; a += step) {
      for (double b = 0.0; b <= smax + 1e-12; b += step) {
        const double c = e - a - b;
        if (c < -1e-12 || c > smax + 1e-12) continue;
        const double cost = lossless_cost(s, {a, b, c, 0.0}, u, t_set);
        if (cost < best) {
          best = cost;
          best_early = a + b;
        }
      }
    }
    EXPECT_LE(eq.objective, best + 1e-6) << "u=" << u;
    EXPECT_NEAR(lossless_cost(s, sched, u, t_set), eq.objective, 1e-5);
    EXPECT_NEAR(early, best_early, 2 * step) << "u=" << u;
    EXPECT_GE(early, prev_solver - 1e-6);
    EXPECT_GE(best_early, prev_grid - 1e-9);
    prev_solver = early;
    prev_grid = best_early;
  }
}

TEST(Budget, GeneratorCostOfSurplus) {
  ders::GeneratorSpec g;
  g.alpha = 1.0;
  g.beta = 0.0;
  g.gamma = 5.0;
  g.p_max = 10.0;
  EXPECT_DOUBLE_EQ(market::default_budget(g, 2.0, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(market::default_budget(g, 0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(market::default_budget(g, -1.5, 1.0), 0.0);
}

namespace {

market::Equilibrium flat_equilibrium(const market::Scenario& s, double dlmp, double pg) {
  market::Equilibrium eq;
  eq.status = convex::Status::kOptimal;
  eq.p_g.assign(s.horizon, pg);
  eq.q_g.assign(s.horizon, 0.0);
  eq.dlmp.assign(s.feeder.num_buses(), std::vector<double>(s.horizon, dlmp));
  return eq;
}

market::Scenario ct2_seller(double solar, double load, double declared_shapeable = 0.0) {
  auto s = small_scenario(2, 1);
  s.devices[2].load = flat(2, ders::ProfileKind::kUncontrollableLoad, 1, load);
  if (solar > 0.0) s.devices[2].solar = flat(2, ders::ProfileKind::kSolar, 1, solar);
  add_crowdsourcee(s, 2, feeder::CtClass::kCt2);
  auto& prefs = s.crowdsourcees[2].preferences;
  prefs.sell_to_utility = {true};
  if (declared_shapeable > 0.0) prefs.shapeable_schedule = std::vector<double>{declared_shapeable};
  return s;
}

}  // namespace

TEST(Phase2, BudgetFloorBindsForSingleSeller) {
  auto s = ct2_seller(1.0, 1.5);
  auto eq = flat_equilibrium(s, 3.0, 0.5);
  auto f = market::perfect_forecast(s, 0);
  auto built = market::build_cesid(s, eq, f, 0, 5.0);
  ASSERT_EQ(built.sellers.size(), 1u);
  auto sol = convex::solve(built.problem);
  ASSERT_EQ(sol.status, convex::Status::kOptimal);
  EXPECT_NEAR(sol.x[built.sellers[0].b], 5.0, 1e-6);
  EXPECT_NEAR(sol.x[built.sellers[0].lambda_a], 2.0, 1e-6);
}

TEST(Phase2, NegativeInjectionForcesPriceToZero) {
  auto s = ct2_seller(0.0, 0.2, 0.3);
  auto eq = flat_equilibrium(s, 25.0, 0.5);
  auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, 0), 0);
  ASSERT_EQ(out.ct2.size(), 1u);
  EXPECT_NEAR(out.ct2[0].p_ni, -0.3, 1e-12);
  EXPECT_DOUBLE_EQ(out.ct2[0].lambda_a, -25.0);
  EXPECT_DOUBLE_EQ(out.ct2[0].b, 0.0);
  EXPECT_DOUBLE_EQ(out.ct2[0].final_price, 0.0);
  EXPECT_DOUBLE_EQ(out.b_total, 0.0);
}

TEST(Phase2, ZeroInjectionEarnsNothing) {
  auto s = ct2_seller(0.3, 0.2, 0.3);
  auto eq = flat_equilibrium(s, 25.0, 0.5);
  auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, 0), 0);
  EXPECT_NEAR(out.ct2[0].p_ni, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(out.ct2[0].b, 0.0);
}

TEST(Phase2, PositiveSellerIsPaid) {
  auto s = ct2_seller(0.6, 1.0);
  auto eq = flat_equilibrium(s, 22.0, 0.4);
  auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, 0), 0);
  ASSERT_EQ(out.status, convex::Status::kOptimal);
  EXPECT_GT(out.b_total, 0.0);
  EXPECT_GT(out.ct2[0].b, 0.0);
  EXPECT_NEAR(out.ct2[0].b, out.b_total, 1e-6);
  EXPECT_NEAR(out.ct2[0].b, out.ct2[0].p_ni * out.ct2[0].final_price, 1e-6);
}

TEST(Phase2, UnwillingSellerIsNotPaid) {
  auto s = ct2_seller(0.6, 1.0);
  s.crowdsourcees[2].preferences.sell_to_utility = {false};
  auto eq = flat_equilibrium(s, 22.0, 0.4);
  auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, 0), 0);
  EXPECT_DOUBLE_EQ(out.b_total, 0.0);
  EXPECT_DOUBLE_EQ(out.ct2[0].b, 0.0);
  // Surplus is withheld: the generator serves the full load.
  EXPECT_GT(out.p_g, 1.0);
}

TEST(Phase2, PerfectForecastReproducesDayAhead) {
  auto s = small_scenario(3, 6);
  s.devices[2].load = {2, ders::ProfileKind::kUncontrollableLoad, {0.2, 0.3, 0.9, 0.8, 0.3, 0.2}, std::nullopt};
  s.devices[3].load = flat(3, ders::ProfileKind::kUncontrollableLoad, 6, 0.1);
  s.devices[3].solar = {3, ders::ProfileKind::kSolar, {0.0, 0.1, 0.3, 0.2, 0.0, 0.0}, std::nullopt};
  add_crowdsourcee(s, 3, feeder::CtClass::kCt1);
  s.devices[3].battery = ders::BatterySpec{3, 0.95, 0.95, 0.2, 0.2, 0.0, 0.8, 0.16};
  auto eq = market::solve_phase1(s);
  const auto& g = s.generator();
  for (int t = 0; t < 6; ++t) {
    auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, t), t);
    ASSERT_EQ(out.status, convex::Status::kOptimal);
    EXPECT_NEAR(out.p_g, eq.p_g[static_cast<std::size_t>(t)], 1e-5) << "t=" << t;
    EXPECT_NEAR(ders::generation_cost(g, out.p_g_deviation), g.gamma, 1e-4);
    EXPECT_FALSE(out.fallback);
    EXPECT_DOUBLE_EQ(out.total_incentive(), 0.0);
  }
}

TEST(Phase2, RejectsMissingForecastAndBadHour) {
  auto s = ct2_seller(0.6, 1.0);
  auto eq = flat_equilibrium(s, 22.0, 0.4);
  auto f = market::perfect_forecast(s, 0);
  f.solar.clear();
  EXPECT_THROW(market::build_cesid(s, eq, f, 0), Error);
  EXPECT_THROW(market::perfect_forecast(s, 1), Error);
}

// Random chains with several CT2 sellers: payment identity, non-negativity,
// budget floor and zero-injection zero-pay.
TEST(Phase2Property, IncentiveInvariantsHold) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 4);
    auto s = small_scenario(n, 1);
    for (int b = 2; b <= n; ++b) {
      s.devices[b].load = flat(b, ders::ProfileKind::kUncontrollableLoad, 1, 0.1 + 0.4 * unit(rng));
      if (unit(rng) < 0.7) {
        add_crowdsourcee(s, b, feeder::CtClass::kCt2);
        s.devices[b].solar = flat(b, ders::ProfileKind::kSolar, 1, 0.5 * unit(rng));
        auto& prefs = s.crowdsourcees[b].preferences;
        prefs.sell_to_utility = {unit(rng) < 0.8};
        if (unit(rng) < 0.4) prefs.shapeable_schedule = std::vector<double>{0.3 * unit(rng)};
      }
    }
    auto eq = market::solve_phase1(s);
    auto out = market::solve_phase2(s, eq, market::perfect_forecast(s, 0), 0);
    if (out.fallback) continue;
    ++solved;
    double total = 0.0;
    for (const auto& c : out.ct2) {
      EXPECT_GE(c.b, -1e-8);
      EXPECT_NEAR(c.b, c.p_ni * s.dt * c.final_price, 1e-6);
      if (c.p_ni <= 0.0) EXPECT_LE(c.b, 1e-6);
      total += c.b;
    }
    EXPECT_GE(total, out.b_total - 1e-6);
  }
  EXPECT_GE(solved, 35);
}
