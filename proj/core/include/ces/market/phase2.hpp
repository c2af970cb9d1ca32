#pragma once

#include <map>
#include <string>
#include <vector>

#include "ces/convex/problem.hpp"
#include "ces/market/phase1.hpp"
#include "ces/market/scenario.hpp"

namespace ces::market {

// Hour-ahead values for one step; every bus carrying a profile needs an entry.
struct HourAheadForecast {
  int hour = 0;
  std::map<int, double> load_p;  // MW
  std::map<int, double> load_q;  // MVAr
  std::map<int, double> solar;   // MW
};

// Day-ahead values repackaged as an hour-ahead forecast (zero mismatch).
HourAheadForecast perfect_forecast(const Scenario& scenario, int hour);

struct Ct2Position {
  int bus = 0;
  bool willing = false;      // sells to the utility this hour
  double p_ni = 0.0;         // MW, surplus beyond committed trades
  double offered = 0.0;      // MW actually injected beyond commitments
  double injection = 0.0;    // MW net bus injection
};

// CT2 positions for one hour under the supplied forecast.
std::vector<Ct2Position> ct2_positions(const Scenario& scenario, const HourAheadForecast& forecast);

// Cost of producing the aggregate positive CT2 surplus from the substation
// generator; zero when nothing is offered.
double default_budget(const Scenario& scenario, const Equilibrium& eq, int t,
                      const HourAheadForecast& forecast);
double default_budget(const ders::GeneratorSpec& gen, double surplus_mw, double dt);

struct SellerIndex {
  int bus = 0;
  std::size_t b = kNoVar;
  std::size_t lambda_a = kNoVar;
};

struct Phase2Problem {
  convex::ConicProblem problem;
  NetworkIndex net;
  std::vector<SellerIndex> sellers;
  std::vector<Ct2Position> positions;
  double b_total = 0.0;
};

Phase2Problem build_cesid(const Scenario& scenario, const Equilibrium& eq,
                          const HourAheadForecast& forecast, int t);
// Explicit budget floor in $ (used by tests and the fallback path).
Phase2Problem build_cesid(const Scenario& scenario, const Equilibrium& eq,
                          const HourAheadForecast& forecast, int t, double b_total);

struct SellerOutcome {
  int bus = 0;
  bool willing = false;
  double p_ni = 0.0;        // MW
  double lambda_eq = 0.0;   // $/MWh
  double lambda_a = 0.0;    // $/MWh
  double b = 0.0;           // $
  double final_price = 0.0; // $/MWh
};

struct IncentiveOutcome {
  int hour = 0;
  convex::Status status = convex::Status::kMaxIter;
  std::vector<SellerOutcome> ct2;  // every CT2 bus, ascending
  double p_g = 0.0;
  double q_g = 0.0;
  double p_g_eq = 0.0;
  double p_g_deviation = 0.0;  // MW
  double b_total = 0.0;
  double objective = 0.0;
  double max_relaxation_gap = 0.0;
  // Set when the incentive solve failed and the hour was rebalanced by the
  // generator alone.
  bool fallback = false;
  std::string note;

  double total_incentive() const;
};

IncentiveOutcome solve_phase2(const Scenario& scenario, const Equilibrium& eq,
                              const HourAheadForecast& forecast, int t);

}  // namespace ces::market
