#pragma once

#include <map>
#include <optional>
#include <vector>

#include "ces/convex/problem.hpp"
#include "ces/convex/solver.hpp"
#include "ces/market/scenario.hpp"

namespace ces::market {

inline constexpr std::size_t kNoVar = static_cast<std::size_t>(-1);

// Variable indices of one time step of the branch-flow network. Vectors are
// indexed by bus id (slot 0 unused); P, Q and l refer to the line whose child
// is that bus and are kNoVar at the root.
struct NetworkIndex {
  std::vector<std::size_t> v, P, Q, l;
  std::size_t pg = kNoVar;
  std::size_t qg = kNoVar;
};

struct BatteryIndex {
  std::vector<std::size_t> e, h, d;
};

struct Phase1Index {
  std::vector<NetworkIndex> net;  // per step
  std::map<int, BatteryIndex> battery;                 // CT1 buses
  std::map<int, std::vector<std::size_t>> shapeable;   // CT1 buses, kNoVar outside the window
};

struct Phase1Problem {
  convex::ConicProblem problem;
  Phase1Index index;
};

// Per-step branch-flow solution in p.u.; vectors indexed by bus id.
struct BranchState {
  std::vector<double> v, p, q, l, P, Q;
};

struct Phase1Diagnostics {
  double max_relaxation_gap = 0.0;   // max |P^2 + Q^2 - v l| p.u.
  double max_balance_residual = 0.0; // max hourly |sum p - losses| p.u.
  convex::KktResiduals kkt;
  int iterations = 0;
  double solve_seconds = 0.0;
  // (bus, step) pairs where a battery charges and discharges at once.
  std::vector<std::pair<int, int>> simultaneous_charge;
};

struct Equilibrium {
  convex::Status status = convex::Status::kMaxIter;
  std::vector<double> p_g, q_g;  // MW, MVAr per step
  std::map<int, ders::BatteryTrajectory> batteries;  // CT1, MW / MWh
  std::map<int, std::vector<double>> shapeable;      // CT1, MW
  std::vector<std::vector<double>> dlmp;             // [bus - 1][t], $/MWh
  std::vector<BranchState> branch;
  double objective = 0.0;
  Phase1Diagnostics diagnostics;

  double dlmp_at(int bus, int t) const;
};

Phase1Problem build_cesopf(const Scenario& scenario);

// Throws Error{kInfeasible | kSolverFailure} when the solver does not reach
// optimality; the message carries the status and residuals.
Equilibrium solve_phase1(const Scenario& scenario);

}  // namespace ces::market
