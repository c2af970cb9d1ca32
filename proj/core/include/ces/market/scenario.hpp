#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ces/convex/solver.hpp"
#include "ces/ders/devices.hpp"
#include "ces/ders/registry.hpp"
#include "ces/feeder/feeder.hpp"

namespace ces::market {

// Market solves run tighter than the solver default so that device schedules
// clear the 1e-8 feasibility checks.
inline convex::SolverOptions market_solver_defaults() {
  convex::SolverOptions o;
  o.tol = 1e-9;
  return o;
}

struct MarketOptions {
  convex::SolverOptions solver = market_solver_defaults();
  // $/MWh applied to line losses; defaults to the mean generator beta.
  std::optional<double> loss_price;
  // Upper bound on the adjustment price as a multiple of the DLMP.
  double lambda_a_max_factor = 10.0;
  // Drop the loss variables (linearized branch flow).
  bool lindistflow = false;
};

// Load and solar profiles in `devices` are the day-ahead forecasts.
struct Scenario {
  std::string name;
  feeder::Feeder feeder;
  ders::DeviceSet devices;
  ders::Registry crowdsourcees;
  std::size_t horizon = 24;
  double dt = 1.0;
  // Accepted Type B trades; pinned as constant schedules in both phases.
  std::vector<ders::TradeRequest> trades;
  MarketOptions options;

  const ders::GeneratorSpec& generator() const;
  double loss_price() const;
  std::optional<feeder::CtClass> ct_class(int bus) const;
  // MW committed by accepted trades at bus and step: sells positive, buys negative.
  double committed(int bus, int t) const;
};

// Throws Error on inconsistent profiles, devices, trades or registry.
void validate(const Scenario& scenario);

// Same network and loads with batteries, solar and trades removed, CT1
// shapeable loads served as early as possible, and CT2 sell flags cleared.
Scenario baseline_scenario(const Scenario& scenario);

// As-early-as-possible shapeable schedule at s_max.
std::vector<double> asap_schedule(const ders::ShapeableLoadSpec& spec, std::size_t horizon, double dt);

}  // namespace ces::market
