#include "network.hpp"

#include <algorithm>
#include <cmath>

#include "ces/common/error.hpp"
#include "ces/convex/transform.hpp"

namespace ces::market::detail {

using convex::ConeConstraint;
using convex::ConicProblem;

std::string step_label(const char* kind, int bus, int t) {
  return std::string(kind) + ":" + std::to_string(bus) + ":" + std::to_string(t);
}

NetworkIndex add_network_step(ConicProblem& p, const Scenario& s, const feeder::Topology& topo, int t,
                              double loss_weight) {
  const auto& f = s.feeder;
  const std::size_t n = f.num_buses();
  const double base = f.base_mva;
  NetworkIndex idx;
  idx.v.assign(n + 1, kNoVar);
  idx.P.assign(n + 1, kNoVar);
  idx.Q.assign(n + 1, kNoVar);
  idx.l.assign(n + 1, kNoVar);
  for (std::size_t b = 1; b <= n; ++b) {
    idx.v[b] = p.add_variable();
    if (b == 1) continue;
    idx.P[b] = p.add_variable();
    idx.Q[b] = p.add_variable();
    idx.l[b] = p.add_variable();
  }
  idx.pg = p.add_variable();
  idx.qg = p.add_variable();

  p.add_equality({{idx.v[1], 1.0}}, 1.0, step_label("vroot", 1, t));
  for (std::size_t b = 2; b <= n; ++b) {
    const int bus = static_cast<int>(b);
    p.add_bounds(idx.v[b], f.v_min, f.v_max, step_label("v", bus, t));
  }
  for (std::size_t b = 2; b <= n; ++b) {
    const auto& line = f.lines[static_cast<std::size_t>(topo.line_of[b])];
    const int bus = static_cast<int>(b);
    const std::size_t parent = static_cast<std::size_t>(line.parent);
    const double z2 = line.r * line.r + line.x * line.x;
    // v_parent = v_child - 2 (r P + x Q) + |z|^2 l
    p.add_equality({{idx.v[parent], 1.0}, {idx.v[b], -1.0}, {idx.P[b], 2.0 * line.r},
                    {idx.Q[b], 2.0 * line.x}, {idx.l[b], -z2}},
                   0.0, step_label("drop", bus, t));
    ConeConstraint c;
    c.rows = {{{idx.P[b], 2.0}}, {{idx.Q[b], 2.0}}, {{idx.v[b], 1.0}, {idx.l[b], -1.0}}};
    c.d = {0.0, 0.0, 0.0};
    c.g = {{idx.v[b], 1.0}, {idx.l[b], 1.0}};
    c.h = 0.0;
    c.label = step_label("bf", bus, t);
    c.branch_flow_loss = idx.l[b];
    p.add_cone(std::move(c));
    if (loss_weight != 0.0 && line.r != 0.0) p.objective().add_linear(idx.l[b], loss_weight * line.r);
  }

  const auto& gen = s.generator();
  p.add_bounds(idx.pg, gen.p_min / base, gen.p_max / base, step_label("pg", 1, t));
  std::optional<double> qlo, qhi;
  if (gen.q_min) qlo = *gen.q_min / base;
  if (gen.q_max) qhi = *gen.q_max / base;
  if (qlo || qhi) p.add_bounds(idx.qg, qlo, qhi, step_label("qg", 1, t));
  return idx;
}

void add_balance_rows(ConicProblem& p, const Scenario& s, const feeder::Topology& topo, const NetworkIndex& idx,
                      const StepInjection& inj, int t) {
  const auto& f = s.feeder;
  const std::size_t n = f.num_buses();
  for (std::size_t b = 1; b <= n; ++b) {
    const int bus = static_cast<int>(b);
    convex::LinearExpr rp = inj.p_terms[b];
    convex::LinearExpr rq;
    for (int c : topo.children[b]) {
      const auto sc = static_cast<std::size_t>(c);
      const auto& line = f.lines[static_cast<std::size_t>(topo.line_of[sc])];
      rp.push_back({idx.P[sc], 1.0});
      rq.push_back({idx.Q[sc], 1.0});
      if (line.r != 0.0) rp.push_back({idx.l[sc], -line.r});
      if (line.x != 0.0) rq.push_back({idx.l[sc], -line.x});
    }
    if (b == 1) {
      rp.push_back({idx.pg, 1.0});
      rq.push_back({idx.qg, 1.0});
    } else {
      rp.push_back({idx.P[b], -1.0});
      rq.push_back({idx.Q[b], -1.0});
    }
    p.add_equality(std::move(rp), -inj.p_const[b], step_label("p", bus, t));
    p.add_equality(std::move(rq), -inj.q_const[b], step_label("q", bus, t));
  }
}

void add_line_limits(ConicProblem& p, const Scenario& s, const NetworkIndex& idx, int t) {
  const auto& f = s.feeder;
  for (const auto& line : f.lines) {
    if (!line.s_max) continue;
    const auto b = static_cast<std::size_t>(line.child);
    ConeConstraint c;
    c.rows = {{{idx.P[b], 1.0}}, {{idx.Q[b], 1.0}}};
    c.d = {0.0, 0.0};
    c.h = *line.s_max;
    c.label = step_label("smax", line.child, t);
    p.add_cone(std::move(c));
  }
}

void maybe_linearize(ConicProblem& p, const Scenario& s) {
  if (s.options.lindistflow) p = convex::linearize_socp_to_qp(p);
}

BranchState extract_branch(const Scenario& s, const feeder::Topology& topo, const NetworkIndex& idx,
                           const std::vector<double>& x) {
  const auto& f = s.feeder;
  const std::size_t n = f.num_buses();
  BranchState b;
  b.v.assign(n + 1, 0.0);
  b.p.assign(n + 1, 0.0);
  b.q.assign(n + 1, 0.0);
  b.l.assign(n + 1, 0.0);
  b.P.assign(n + 1, 0.0);
  b.Q.assign(n + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    b.v[i] = x[idx.v[i]];
    if (i == 1) continue;
    b.P[i] = x[idx.P[i]];
    b.Q[i] = x[idx.Q[i]];
    b.l[i] = x[idx.l[i]];
  }
  for (std::size_t i = 1; i <= n; ++i) {
    double pi = b.P[i], qi = b.Q[i];
    for (int c : topo.children[i]) {
      const auto sc = static_cast<std::size_t>(c);
      const auto& line = f.lines[static_cast<std::size_t>(topo.line_of[sc])];
      pi -= b.P[sc] - line.r * b.l[sc];
      qi -= b.Q[sc] - line.x * b.l[sc];
    }
    b.p[i] = pi;
    b.q[i] = qi;
  }
  return b;
}

double relaxation_gap(const Scenario& s, const BranchState& b) {
  double worst = 0.0;
  for (std::size_t i = 2; i <= s.feeder.num_buses(); ++i) {
    worst = std::max(worst, std::abs(b.P[i] * b.P[i] + b.Q[i] * b.Q[i] - b.v[i] * b.l[i]));
  }
  return worst;
}

double balance_residual(const Scenario& s, const BranchState& b) {
  double sum = 0.0;
  for (std::size_t i = 1; i <= s.feeder.num_buses(); ++i) sum += b.p[i];
  for (const auto& line : s.feeder.lines) sum -= line.r * b.l[static_cast<std::size_t>(line.child)];
  return std::abs(sum);
}

namespace {

const ders::BusDevices* devices_at(const Scenario& s, int bus) {
  auto it = s.devices.find(bus);
  return it == s.devices.end() ? nullptr : &it->second;
}

}  // namespace

double load_p(const Scenario& s, int bus, int t) {
  const auto* d = devices_at(s, bus);
  return d && d->load ? d->load->values.at(static_cast<std::size_t>(t)) : 0.0;
}

double load_q(const Scenario& s, int bus, int t) {
  const auto* d = devices_at(s, bus);
  return d && d->load && d->load->reactive ? d->load->reactive->at(static_cast<std::size_t>(t)) : 0.0;
}

double solar_p(const Scenario& s, int bus, int t) {
  const auto* d = devices_at(s, bus);
  return d && d->solar ? d->solar->values.at(static_cast<std::size_t>(t)) : 0.0;
}

void add_generator_cost(ConicProblem& p, const Scenario& s, std::size_t pg, double offset_mw) {
  // dt * C(base pg - offset) expanded in pg.
  const auto& g = s.generator();
  const double base = s.feeder.base_mva, dt = s.dt, c = offset_mw;
  if (g.alpha != 0.0) p.objective().add_square(pg, g.alpha * base * base * dt);
  p.objective().add_linear(pg, (g.beta - 2.0 * g.alpha * c) * base * dt);
  p.objective().constant += (g.alpha * c * c - g.beta * c + g.gamma) * dt;
}

}  // namespace ces::market::detail
