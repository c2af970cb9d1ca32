#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "ces/ders/registry.hpp"
#include "ces/feeder/feeder.hpp"
#include "ces/market/phase2.hpp"
#include "ces/market/scenario.hpp"

namespace ces::scenario {

// Hour windows are half-open [first, second).
struct ScenarioRecipe {
  std::string feeder = "sce56";  // builtin name or path to a feeder document
  std::string loads = "sce56";   // builtin loads document or path
  double battery_ratio = 0.8;
  double battery_hours = 4.0;
  double battery_init_soc = 0.2;
  double solar_ratio = 0.5;
  double shapeable_ratio = 0.2;
  std::pair<int, int> shapeable_duration{4, 8};
  std::pair<int, int> shapeable_window{8, 23};
  std::pair<int, int> solar_window{6, 19};
  double forecast_noise = 0.02;
  std::uint64_t seed = 7;
  // Substation generator cost and limits.
  double gen_alpha = 10.0;
  double gen_beta = 30.0;
  double gen_gamma = 5.0;
  double gen_p_max = 10.0;

  void validate() const;
};

nlohmann::json to_json(const ScenarioRecipe& r);
ScenarioRecipe recipe_from_json(const nlohmann::json& j);

// Double-hump daily curve, max = peak, min >= 0.3 peak.
std::vector<double> synth_load_profile(double peak, std::uint64_t seed, std::size_t horizon = 24);

// Half-sine over the window peaking at its midpoint, max = ratio * peak_load.
std::vector<double> synth_solar_profile(double peak_load, double ratio, std::pair<int, int> window,
                                        std::size_t horizon = 24);

bool is_prime(int n);
// Every bus is a crowdsourcee; prime ids are CT2.
ders::Registry assign_ct_classes(const feeder::Feeder& feeder, std::size_t horizon = 24);

market::Scenario build_case_study(const ScenarioRecipe& recipe);

struct IslandedCase {
  market::Scenario scenario;
  double solar_scale = 1.0;
  double battery_scale = 1.0;
};

// Generator output forced to zero, all users CT1, solar and battery capacity
// scaled by the smallest factor in [1, 5] meeting the daily energy balance
// with the given margin for storage and line losses. Throws kInfeasible when
// the cap is not enough.
IslandedCase islanded_variant(const market::Scenario& scenario, double min_scale = 1.0);

// Relative perturbation eps drawn from N(0, noise^2) clamped to 3 noise,
// deterministic in (seed, bus, t, stream).
double forecast_error(double noise, std::uint64_t seed, int bus, int t, int stream = 0);
double hour_ahead_forecast(const std::vector<double>& day_ahead, int t, double noise, std::uint64_t seed,
                           int bus, int stream = 0);
market::HourAheadForecast hour_ahead(const market::Scenario& scenario, int t, double noise, std::uint64_t seed);

// Recipe echo plus content hashes of the feeder and device tables.
nlohmann::json manifest(const market::Scenario& scenario, const ScenarioRecipe& recipe);
std::string scenario_hash(const market::Scenario& scenario);

}  // namespace ces::scenario
