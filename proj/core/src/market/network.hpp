#pragma once

// Shared branch-flow network fragment used by both market phases.

#include <string>
#include <vector>

#include "ces/convex/problem.hpp"
#include "ces/feeder/feeder.hpp"
#include "ces/market/phase1.hpp"
#include "ces/market/scenario.hpp"

namespace ces::market::detail {

// Net injection at each bus (index = bus id) in p.u.: constant plus variable terms.
struct StepInjection {
  std::vector<convex::LinearExpr> p_terms;
  std::vector<double> p_const;
  std::vector<double> q_const;

  explicit StepInjection(std::size_t num_buses)
      : p_terms(num_buses + 1), p_const(num_buses + 1, 0.0), q_const(num_buses + 1, 0.0) {}
};

std::string step_label(const char* kind, int bus, int t);

// Adds v, P, Q, l, pg, qg for one step with voltage drop equalities,
// relaxation cones, voltage and generator limits, and the loss term
// (weight $ per p.u. loss). Line limits are deferred to add_line_limits.
NetworkIndex add_network_step(convex::ConicProblem& p, const Scenario& s, const feeder::Topology& topo,
                              int t, double loss_weight);

// Real and reactive balance rows, labelled "p:<bus>:<t>" and "q:<bus>:<t>".
void add_balance_rows(convex::ConicProblem& p, const Scenario& s, const feeder::Topology& topo,
                      const NetworkIndex& idx, const StepInjection& inj, int t);

void add_line_limits(convex::ConicProblem& p, const Scenario& s, const NetworkIndex& idx, int t);

// Applies the lossless approximation when requested by the scenario options.
void maybe_linearize(convex::ConicProblem& p, const Scenario& s);

BranchState extract_branch(const Scenario& s, const feeder::Topology& topo, const NetworkIndex& idx,
                           const std::vector<double>& x);

double relaxation_gap(const Scenario& s, const BranchState& b);

// |sum_i p_i - sum_lines r l| in p.u.
double balance_residual(const Scenario& s, const BranchState& b);

// Power of the bus load / solar profile at t in MW (0 when absent).
double load_p(const Scenario& s, int bus, int t);
double load_q(const Scenario& s, int bus, int t);
double solar_p(const Scenario& s, int bus, int t);

// Adds dt * C(base * pg - offset_mw) for the substation generator.
void add_generator_cost(convex::ConicProblem& p, const Scenario& s, std::size_t pg, double offset_mw);

}  // namespace ces::market::detail
