#include <gtest/gtest.h>

#include <random>

#include "ces/common/error.hpp"
#include "ces/ders/devices.hpp"
#include "ces/ders/registry.hpp"

namespace ces::ders {
namespace {

BatterySpec battery() {
  BatterySpec b;
  b.bus = 2;
  b.eta_in = 0.95;
  b.eta_out = 0.9;
  b.p_cha_max = 1.0;
  b.p_dis_max = 1.0;
  b.e_min = 0.0;
  b.e_max = 4.0;
  b.e_init = 1.0;
  return b;
}

TEST(BatteryTransition, Examples) {
  auto b = battery();
  EXPECT_DOUBLE_EQ(battery_transition(b, 1.0, 0.0, 0.0, 1.0), 1.0);
  EXPECT_NEAR(battery_transition(b, 0.2, 1.0, 0.0, 1.0), 1.15, 1e-12);
  EXPECT_NEAR(battery_transition(b, 1.0, 0.0, 0.9, 1.0), 0.0, 1e-12);
  try {
    battery_transition(b, 1.0, 1.5, 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBoundViolation);
  }
}

TEST(BatteryFeasible, Examples) {
  auto b = battery();
  BatteryTrajectory idle{std::vector<double>(24, 1.0), std::vector<double>(24, 0.0), std::vector<double>(24, 0.0)};
  EXPECT_TRUE(battery_feasible(b, idle, 1.0).ok);

  auto over = idle;
  over.d[5] = 1.5;
  auto r = battery_feasible(b, over, 1.0);
  ASSERT_FALSE(r.ok);
  EXPECT_EQ(r.violation->constraint, "discharge_limit");
  EXPECT_EQ(r.violation->t, 5);

  auto drift = idle;
  for (std::size_t t = 3; t < 24; ++t) drift.e[t] += 1e-3;
  r = battery_feasible(b, drift, 1.0);
  ASSERT_FALSE(r.ok);
  EXPECT_EQ(r.violation->constraint, "state_update");
  EXPECT_EQ(r.violation->t, 3);
}

TEST(BatteryProperty, EnergyConservation) {
  std::mt19937_64 rng(17);
  auto b = battery();
  b.e_max = 100.0;
  b.e_init = 50.0;
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    BatteryTrajectory traj;
    double e = b.e_init, expect = b.e_init;
    for (int t = 0; t < 24; ++t) {
      double h = p(rng), d = p(rng);
      e = battery_transition(b, e, h, d, 1.0);
      traj.h.push_back(h);
      traj.d.push_back(d);
      traj.e.push_back(e);
      expect += h * b.eta_in - d / b.eta_out;
    }
    EXPECT_TRUE(battery_feasible(b, traj, 1.0).ok);
    EXPECT_NEAR(traj.e.back(), expect, 1e-8);
    auto pb = traj.p_b();
    for (std::size_t t = 0; t < pb.size(); ++t) EXPECT_DOUBLE_EQ(pb[t], traj.d[t] - traj.h[t]);
  }
}

ShapeableLoadSpec shapeable() {
  ShapeableLoadSpec s;
  s.bus = 4;
  s.e_demand = 4.0;
  s.t_start = 8;
  s.t_end = 12;
  s.s_min = 0.0;
  s.s_max = 2.0;
  return s;
}

TEST(ShapeableFeasible, Examples) {
  auto s = shapeable();
  std::vector<double> series(24, 0.0);
  for (int t = 8; t < 12; ++t) series[t] = 1.0;
  EXPECT_TRUE(shapeable_feasible(s, series, 1.0).ok);
  auto outside = series;
  outside[2] = 0.5;
  auto r = shapeable_feasible(s, outside, 1.0);
  ASSERT_FALSE(r.ok);
  EXPECT_EQ(r.violation->constraint, "outside_window");
  EXPECT_EQ(r.violation->t, 2);
  auto shy = series;
  shy[11] = 0.9;
  r = shapeable_feasible(s, shy, 1.0);
  ASSERT_FALSE(r.ok);
  EXPECT_EQ(r.violation->constraint, "energy_demand");
}

TEST(ShapeableProperty, AcceptedSeriesHitDemand) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  auto s = shapeable();
  s.t_end = 20;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> series(24, 0.0);
    double total = 0.0;
    for (int t = s.t_start; t < s.t_end; ++t) total += (series[t] = w(rng));
    for (int t = s.t_start; t < s.t_end; ++t) series[t] *= s.e_demand / total;
    if (!shapeable_feasible(s, series, 1.0).ok) continue;
    double e = 0.0;
    for (double v : series) e += v;
    EXPECT_NEAR(e, s.e_demand, 1e-8);
  }
  EXPECT_THROW(
      [] {
        auto bad = shapeable();
        bad.e_demand = 9.0;
        bad.validate(1.0);
      }(),
      Error);
}

TEST(GenerationCost, ExamplesAndConvexity) {
  GeneratorSpec g;
  g.alpha = 1.0;
  EXPECT_DOUBLE_EQ(generation_cost(g, 2.0), 4.0);
  g = {};
  g.beta = 3.0;
  g.gamma = 1.0;
  EXPECT_DOUBLE_EQ(generation_cost(g, 2.0), 7.0);
  g = {};
  g.alpha = 0.5;
  g.beta = 1.0;
  EXPECT_DOUBLE_EQ(generation_cost(g, 3.0), 7.5);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0), a(0.0, 3.0), step(0.01, 2.0);
  for (int i = 0; i < 500; ++i) {
    GeneratorSpec s;
    s.alpha = a(rng);
    s.beta = u(rng);
    s.gamma = u(rng);
    double p = u(rng), h = step(rng);
    double second = generation_cost(s, p - h) - 2 * generation_cost(s, p) + generation_cost(s, p + h);
    EXPECT_GE(second, -1e-9);
  }
}

TEST(Injection, Examples) {
  InjectionComponents c;
  EXPECT_DOUBLE_EQ(net_injection(c), 0.0);
  c = {0.0, 0.5, 1.0, 0.3, 0.2, feeder::CtClass::kCt1, false};
  EXPECT_NEAR(net_injection(c), 1.0, 1e-12);
  c = {0.0, 0.0, 1.0, 0.3, 0.0, feeder::CtClass::kCt2, false};
  EXPECT_NEAR(net_injection(c), -0.3, 1e-12);

  InjectionComponents n{0, 0, 1.0, 0, 0, feeder::CtClass::kCt2, true};
  EXPECT_DOUBLE_EQ(ct2_net_injection(n), 1.0);
  n = {0, 0, 0.5, 0, 0.5, feeder::CtClass::kCt2, true};
  EXPECT_DOUBLE_EQ(ct2_net_injection(n), 0.0);
  n = {0, 0.1, 0.2, 0, 0.5, feeder::CtClass::kCt2, true};
  EXPECT_NEAR(ct2_net_injection(n), -0.2, 1e-12);
  n.ct_class = feeder::CtClass::kCt1;
  try {
    ct2_net_injection(n);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotCt2);
  }
}

TEST(InjectionProperty, ExcludedCt2DependsOnlyOnLoad) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    InjectionComponents c{0.0, u(rng), u(rng), u(rng), u(rng), feeder::CtClass::kCt2, false};
    InjectionComponents d = c;
    d.p_b = u(rng);
    d.p_r = u(rng);
    d.p_s = u(rng);
    EXPECT_DOUBLE_EQ(net_injection(c), net_injection(d));
    EXPECT_DOUBLE_EQ(net_injection(c), -c.p_u);
  }
}

TEST(Disutility, Examples) {
  auto s = shapeable();
  s.t_set = 20;
  s.u = 0.0;
  EXPECT_DOUBLE_EQ(disutility(s, 1.3, 5), 0.0);
  s.u = 1.0;
  EXPECT_DOUBLE_EQ(disutility(s, 2.0, 5), 0.0);
  s.u = 0.5;
  EXPECT_DOUBLE_EQ(disutility(s, 0.0, 5), 2.0);
  EXPECT_DOUBLE_EQ(disutility(s, 0.0, 21), 0.0);
}

Registry two_ct2() {
  Registry r;
  r[43] = {43, feeder::CtClass::kCt2, {}};
  r[53] = {53, feeder::CtClass::kCt2, {}};
  r[4] = {4, feeder::CtClass::kCt1, {}};
  return r;
}

TEST(Trades, TypeRules) {
  auto reg = two_ct2();
  TradeRequest t{"t1", 53, 43, EttType::kB, 9, 14, 0.119, 40.0};
  EXPECT_NO_THROW(validate_trade(t, reg, 24));
  EXPECT_NEAR(t.power(1.0), 0.0238, 1e-12);
  auto ct1 = t;
  ct1.seller_bus = 4;
  try {
    validate_trade(ct1, reg, 24);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotCt2);
  }
  auto zero = t;
  zero.energy = 0.0;
  EXPECT_THROW(validate_trade(zero, reg, 24), Error);
  auto late = t;
  late.window_end = 30;
  EXPECT_THROW(validate_trade(late, reg, 24), Error);
}

TEST(Registry, JsonRoundTrip) {
  auto reg = two_ct2();
  reg[53].preferences.sell_to_utility.assign(24, false);
  reg[53].preferences.sell_to_utility[7] = true;
  reg[53].preferences.p2p_trades.push_back({"t1", 53, 43, EttType::kB, 9, 14, 0.119, std::nullopt});
  reg[43].preferences.battery_schedule = std::vector<double>(24, -0.01);
  auto j = to_json(reg);
  auto back = registry_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_TRUE(ct2_excluded(back.at(43)));
  EXPECT_FALSE(ct2_excluded(back.at(53)));
  EXPECT_FALSE(ct2_excluded(back.at(4)));
  EXPECT_THROW(preferences_from_json({{"bogus", 1}}), Error);
}

TEST(Devices, JsonRoundTrip) {
  DeviceSet set;
  set[2].battery = battery();
  set[4].shapeable = shapeable();
  set[4].load = Profile{4, ProfileKind::kUncontrollableLoad, std::vector<double>(24, 0.1),
                        std::vector<double>(24, 0.03)};
  GeneratorSpec g;
  g.alpha = 10;
  g.p_max = 5;
  set[1].generator = g;
  auto j = to_json(set);
  auto back = devices_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.at(2).battery->bus, 2);
}

}  // namespace
}  // namespace ces::ders
