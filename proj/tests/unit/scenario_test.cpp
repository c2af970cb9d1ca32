#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ces/common/error.hpp"
#include "ces/scenario/case_study.hpp"

using namespace ces;
using scenario::ScenarioRecipe;

namespace {

double peak_of(const market::Scenario& s, int bus) {
  const auto& v = s.devices.at(bus).load->values;
  return *std::max_element(v.begin(), v.end());
}

}  // namespace

TEST(LoadProfile, PeakNormalizedWithFloor) {
  for (std::uint64_t seed : {0u, 1u, 42u}) {
    auto v = scenario::synth_load_profile(1.0, seed);
    ASSERT_EQ(v.size(), 24u);
    EXPECT_DOUBLE_EQ(*std::max_element(v.begin(), v.end()), 1.0);
    EXPECT_GE(*std::min_element(v.begin(), v.end()), 0.3 - 1e-12);
  }
  auto big = scenario::synth_load_profile(2.5, 3);
  EXPECT_DOUBLE_EQ(*std::max_element(big.begin(), big.end()), 2.5);
}

TEST(LoadProfile, DeterministicPerSeed) {
  EXPECT_EQ(scenario::synth_load_profile(1.0, 0), scenario::synth_load_profile(1.0, 0));
  auto a = scenario::synth_load_profile(1.0, 0), b = scenario::synth_load_profile(1.0, 1);
  int differ = 0;
  for (std::size_t t = 0; t < 24; ++t) differ += a[t] != b[t];
  EXPECT_GE(differ, 1);
}

TEST(LoadProfile, MorningAndEveningHumps) {
  auto v = scenario::synth_load_profile(1.0, 5);
  auto local_max = [&](std::size_t lo, std::size_t hi) {
    return std::max_element(v.begin() + lo, v.begin() + hi) - v.begin();
  };
  const auto am = local_max(6, 13), pm = local_max(15, 23);
  EXPECT_GT(v[am], v[3]);
  EXPECT_GT(v[pm], v[14] - 1e-12);
  EXPECT_GT(v[pm], v[3]);
}

TEST(SolarProfile, ZeroOutsideWindowMaxAtNoon) {
  auto v = scenario::synth_solar_profile(1.0, 0.5, {6, 19});
  ASSERT_EQ(v.size(), 24u);
  EXPECT_EQ(v[5], 0.0);
  EXPECT_EQ(v[20], 0.0);
  for (int t = 0; t < 6; ++t) EXPECT_EQ(v[t], 0.0);
  for (int t = 19; t < 24; ++t) EXPECT_EQ(v[t], 0.0);
  EXPECT_NEAR(v[12], 0.5, 1e-12);
  EXPECT_NEAR(*std::max_element(v.begin(), v.end()), 0.5, 1e-12);
  EXPECT_GT(std::accumulate(v.begin(), v.end(), 0.0), 0.0);
}

TEST(SolarProfile, ZeroRatioIsZero) {
  auto v = scenario::synth_solar_profile(3.0, 0.0, {6, 19});
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(CtAssignment, PrimeBusesAreCt2) {
  EXPECT_TRUE(scenario::is_prime(2));
  EXPECT_FALSE(scenario::is_prime(1));
  EXPECT_FALSE(scenario::is_prime(4));
  EXPECT_TRUE(scenario::is_prime(53));
  auto s = scenario::build_case_study(ScenarioRecipe{});
  int ct1 = 0, ct2 = 0;
  for (const auto& [bus, c] : s.crowdsourcees) {
    const bool expect_ct2 = scenario::is_prime(bus);
    EXPECT_EQ(c.ct_class == feeder::CtClass::kCt2, expect_ct2) << "bus " << bus;
    (expect_ct2 ? ct2 : ct1) += 1;
  }
  EXPECT_EQ(ct2, 16);
  EXPECT_EQ(ct1, 40);
  EXPECT_EQ(s.crowdsourcees.at(2).ct_class, feeder::CtClass::kCt2);
  EXPECT_EQ(s.crowdsourcees.at(43).ct_class, feeder::CtClass::kCt2);
  EXPECT_EQ(s.crowdsourcees.at(53).ct_class, feeder::CtClass::kCt2);
  EXPECT_EQ(s.crowdsourcees.at(4).ct_class, feeder::CtClass::kCt1);
}

TEST(CaseStudy, DevicesAtEveryBusFollowRatios) {
  ScenarioRecipe r;
  auto s = scenario::build_case_study(r);
  ASSERT_EQ(s.feeder.num_buses(), 56u);
  EXPECT_NO_THROW(market::validate(s));
  for (int bus = 1; bus <= 56; ++bus) {
    const auto& d = s.devices.at(bus);
    ASSERT_TRUE(d.load && d.solar && d.battery) << "bus " << bus;
    const double peak = peak_of(s, bus);
    const auto& b = *d.battery;
    EXPECT_NEAR(b.p_cha_max, 0.8 * peak, 1e-12);
    EXPECT_NEAR(b.p_dis_max, 0.8 * peak, 1e-12);
    EXPECT_NEAR(b.e_max, 3.2 * peak, 1e-12);
    EXPECT_NEAR(b.e_init, 0.64 * peak, 1e-12);
    const auto& sol = d.solar->values;
    EXPECT_NEAR(*std::max_element(sol.begin(), sol.end()), 0.5 * peak, 1e-12);
    if (d.shapeable) {
      const auto& sh = *d.shapeable;
      EXPECT_GE(sh.t_start, 8);
      EXPECT_LE(sh.t_end, 23);
      EXPECT_LE(sh.s_max, 0.2 * peak + 1e-12);
      EXPECT_LE(sh.e_demand, sh.s_max * (sh.t_end - sh.t_start) * s.dt + 1e-12);
      EXPECT_GE(sh.u, 0.0);
      EXPECT_LE(sh.u, 1.0);
    }
  }
}

TEST(CaseStudy, TradeAndSellFlagsRegistered) {
  auto s = scenario::build_case_study(ScenarioRecipe{});
  ASSERT_EQ(s.trades.size(), 1u);
  const auto& tr = s.trades.front();
  EXPECT_EQ(tr.seller_bus, 53);
  ASSERT_TRUE(tr.buyer_bus);
  EXPECT_EQ(*tr.buyer_bus, 43);
  EXPECT_EQ(tr.ett_type, ders::EttType::kB);
  const auto& flags = s.crowdsourcees.at(2).preferences.sell_to_utility;
  ASSERT_EQ(flags.size(), 24u);
  EXPECT_TRUE(std::any_of(flags.begin(), flags.end(), [](bool b) { return b; }));
}

TEST(CaseStudy, ZeroShapeableRatioRemovesShapeableLoads) {
  ScenarioRecipe r;
  r.shapeable_ratio = 0.0;
  auto s = scenario::build_case_study(r);
  for (const auto& [bus, d] : s.devices) EXPECT_FALSE(d.shapeable) << "bus " << bus;
}

TEST(CaseStudy, RecipeValidation) {
  ScenarioRecipe r;
  r.solar_ratio = 2.5;
  EXPECT_THROW(r.validate(), Error);
  r = ScenarioRecipe{};
  r.shapeable_window = {20, 30};
  EXPECT_THROW(r.validate(), Error);
  r = ScenarioRecipe{};
  r.shapeable_duration = {10, 12};
  r.shapeable_window = {8, 13};
  EXPECT_THROW(scenario::build_case_study(r), Error);
}

TEST(CaseStudy, RecipeJsonRoundTrip) {
  ScenarioRecipe r;
  r.seed = 99;
  r.solar_ratio = 0.7;
  auto back = scenario::recipe_from_json(scenario::to_json(r));
  EXPECT_EQ(scenario::to_json(back), scenario::to_json(r));
  auto doc = scenario::to_json(r);
  doc["bogus"] = 1;
  EXPECT_THROW(scenario::recipe_from_json(doc), Error);
}

TEST(CaseStudy, ManifestDeterministic) {
  ScenarioRecipe r;
  auto a = scenario::manifest(scenario::build_case_study(r), r);
  auto b = scenario::manifest(scenario::build_case_study(r), r);
  EXPECT_EQ(a.dump(), b.dump());
  ScenarioRecipe other = r;
  other.seed = r.seed + 1;
  auto c = scenario::manifest(scenario::build_case_study(other), other);
  EXPECT_NE(a.dump(), c.dump());
}

TEST(Forecast, ZeroNoiseIsExact) {
  std::vector<double> day(24, 0.0);
  for (int t = 0; t < 24; ++t) day[t] = 0.1 * t;
  for (int t = 0; t < 24; ++t) EXPECT_EQ(scenario::hour_ahead_forecast(day, t, 0.0, 1, 3), day[t]);
}

TEST(Forecast, DeterministicAndBounded) {
  std::vector<double> day(24, 1.0);
  EXPECT_EQ(scenario::hour_ahead_forecast(day, 7, 0.05, 11, 4), scenario::hour_ahead_forecast(day, 7, 0.05, 11, 4));
  for (int bus = 1; bus <= 56; ++bus) {
    for (int t = 0; t < 24; ++t) {
      const double e = scenario::forecast_error(0.05, 11, bus, t);
      EXPECT_LE(std::abs(e), 0.15 + 1e-15);
      EXPECT_GE(scenario::hour_ahead_forecast(day, t, 0.05, 11, bus), 0.0);
    }
  }
  EXPECT_THROW(scenario::forecast_error(-0.1, 1, 1, 1), Error);
}

TEST(Forecast, EmpiricalStdNearNoise) {
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (int bus = 1; bus <= 56; ++bus) {
    for (int t = 0; t < 24; ++t) {
      const double e = scenario::forecast_error(0.05, 2024, bus, t);
      sum += e;
      sq += e * e;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_GE(sd, 0.03);
  EXPECT_LE(sd, 0.07);
}

TEST(Islanded, GeneratorPinnedAndUsersCt1) {
  auto base = scenario::build_case_study(ScenarioRecipe{});
  auto isl = scenario::islanded_variant(base);
  EXPECT_GE(isl.solar_scale, 1.0);
  EXPECT_LE(isl.solar_scale, 5.0);
  EXPECT_EQ(isl.scenario.generator().p_max, 0.0);
  EXPECT_TRUE(isl.scenario.trades.empty());
  for (const auto& [bus, c] : isl.scenario.crowdsourcees) EXPECT_EQ(c.ct_class, feeder::CtClass::kCt1);
  // Daily energy: scaled solar plus initial storage covers the load.
  double solar = 0.0, load = 0.0, stored = 0.0;
  for (const auto& [bus, d] : isl.scenario.devices) {
    if (d.solar) solar += std::accumulate(d.solar->values.begin(), d.solar->values.end(), 0.0);
    if (d.load) load += std::accumulate(d.load->values.begin(), d.load->values.end(), 0.0);
    if (d.shapeable) load += d.shapeable->e_demand;
    if (d.battery) stored += d.battery->e_init - d.battery->e_min;
  }
  EXPECT_GE(solar + stored, load);
  for (const auto& [bus, d] : isl.scenario.devices) {
    if (!d.battery) continue;
    const auto& orig = *base.devices.at(bus).battery;
    EXPECT_NEAR(d.battery->e_max, orig.e_max * isl.battery_scale, 1e-9);
  }
}
