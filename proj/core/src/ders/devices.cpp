#include "ces/ders/devices.hpp"

#include <cmath>

#include "ces/common/error.hpp"
#include "common/json_util.hpp"

namespace ces::ders {

using nlohmann::json;
namespace du = ces::detail;

namespace {

void check(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

FeasibilityReport fail(std::string constraint, int t) {
  return {false, Violation{std::move(constraint), t}};
}

}  // namespace

void GeneratorSpec::validate() const {
  const std::string where = "generator at bus " + std::to_string(bus);
  check(alpha >= 0.0, ErrorCode::kInvalidArgument, where + ": alpha must be nonnegative");
  check(p_min <= p_max, ErrorCode::kInvalidArgument, where + ": p_min exceeds p_max");
  check(!ramp || *ramp >= 0.0, ErrorCode::kInvalidArgument, where + ": ramp must be nonnegative");
  check(!(q_min && q_max) || *q_min <= *q_max, ErrorCode::kInvalidArgument, where + ": q_min exceeds q_max");
}

void BatterySpec::validate() const {
  const std::string where = "battery at bus " + std::to_string(bus);
  check(eta_in > 0.0 && eta_in <= 1.0, ErrorCode::kInvalidArgument, where + ": eta_in outside (0, 1]");
  check(eta_out > 0.0 && eta_out <= 1.0, ErrorCode::kInvalidArgument, where + ": eta_out outside (0, 1]");
  check(p_cha_max >= 0.0 && p_dis_max >= 0.0, ErrorCode::kInvalidArgument, where + ": negative power limit");
  check(e_min <= e_init && e_init <= e_max, ErrorCode::kInvalidArgument,
        where + ": e_init outside [e_min, e_max]");
}

std::vector<double> BatteryTrajectory::p_b() const {
  std::vector<double> out(std::min(h.size(), d.size()));
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = d[t] - h[t];
  return out;
}

void ShapeableLoadSpec::validate(double dt) const {
  const std::string where = "shapeable load at bus " + std::to_string(bus);
  check(t_start < t_end, ErrorCode::kInvalidArgument, where + ": empty window");
  check(s_min <= s_max, ErrorCode::kInvalidArgument, where + ": s_min exceeds s_max");
  check(u >= 0.0 && u <= 1.0, ErrorCode::kInvalidArgument, where + ": urgency outside [0, 1]");
  check(e_demand >= 0.0, ErrorCode::kInvalidArgument, where + ": negative energy demand");
  const double span = (t_end - t_start) * dt;
  check(e_demand <= span * s_max + 1e-12, ErrorCode::kInfeasible,
        where + ": energy demand exceeds window capacity");
  check(e_demand >= span * s_min - 1e-12, ErrorCode::kInfeasible,
        where + ": minimum power exceeds energy demand");
}

void Profile::validate(std::size_t horizon) const {
  const std::string where = "profile at bus " + std::to_string(bus);
  check(values.size() == horizon, ErrorCode::kDimensionMismatch, where + ": length differs from horizon");
  for (double v : values) check(v >= 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument,
                                where + ": values must be finite and nonnegative");
  if (reactive) {
    check(kind == ProfileKind::kUncontrollableLoad, ErrorCode::kInvalidArgument,
          where + ": only loads carry reactive power");
    check(reactive->size() == horizon, ErrorCode::kDimensionMismatch,
          where + ": reactive length differs from horizon");
  }
}

double battery_transition(const BatterySpec& spec, double e_prev, double h, double d, double dt) {
  if (h < 0.0 || h > spec.p_cha_max) {
    throw Error(ErrorCode::kBoundViolation, "charging power outside [0, p_cha_max]");
  }
  if (d < 0.0 || d > spec.p_dis_max) {
    throw Error(ErrorCode::kBoundViolation, "discharging power outside [0, p_dis_max]");
  }
  return e_prev + h * spec.eta_in * dt - d / spec.eta_out * dt;
}

FeasibilityReport battery_feasible(const BatterySpec& spec, const BatteryTrajectory& traj, double dt,
                                   double tol) {
  const std::size_t n = traj.e.size();
  if (traj.h.size() != n || traj.d.size() != n) return fail("length", -1);
  double prev = spec.e_init;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(i);
    if (traj.h[i] < -tol || traj.h[i] > spec.p_cha_max + tol) return fail("charge_limit", t);
    if (traj.d[i] < -tol || traj.d[i] > spec.p_dis_max + tol) return fail("discharge_limit", t);
    if (traj.e[i] < spec.e_min - tol || traj.e[i] > spec.e_max + tol) return fail("energy_bounds", t);
    const double expect = prev + traj.h[i] * spec.eta_in * dt - traj.d[i] / spec.eta_out * dt;
    if (std::abs(expect - traj.e[i]) > tol) return fail("state_update", t);
    prev = traj.e[i];
  }
  return {};
}

FeasibilityReport shapeable_feasible(const ShapeableLoadSpec& spec, const std::vector<double>& series,
                                     double dt, double tol) {
  double energy = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const int t = static_cast<int>(i);
    const bool inside = t >= spec.t_start && t < spec.t_end;
    if (!inside) {
      if (std::abs(series[i]) > tol) return fail("outside_window", t);
      continue;
    }
    if (series[i] < spec.s_min - tol || series[i] > spec.s_max + tol) return fail("power_bounds", t);
    energy += series[i] * dt;
  }
  if (spec.t_end > static_cast<int>(series.size()) || spec.t_start < 0) return fail("length", -1);
  if (std::abs(energy - spec.e_demand) > tol) return fail("energy_demand", -1);
  return {};
}

double generation_cost(const GeneratorSpec& spec, double p) {
  return spec.alpha * p * p + spec.beta * p + spec.gamma;
}

double disutility(const ShapeableLoadSpec& spec, double s_t, int t) {
  if (t > spec.t_set) return 0.0;
  const double gap = s_t - spec.s_max;
  return spec.u * gap * gap;
}

double net_injection(const InjectionComponents& c) {
  if (c.ct_class == feeder::CtClass::kCt2 && !c.ct2_active) return c.p_g - c.p_u;
  return c.p_g + c.p_b + c.p_r - c.p_u - c.p_s;
}

double ct2_net_injection(const InjectionComponents& c) {
  if (c.ct_class != feeder::CtClass::kCt2) {
    throw Error(ErrorCode::kNotCt2, "net injection is defined for CT2 buses only");
  }
  return c.p_r - c.p_s + c.p_b;
}

void validate_devices(const DeviceSet& devices, const feeder::Feeder& feeder, std::size_t horizon,
                      double dt) {
  for (const auto& [bus, dev] : devices) {
    if (!feeder.has_bus(bus)) throw Error(ErrorCode::kUnknownBus, "devices at unknown bus " + std::to_string(bus));
    if (dev.battery) dev.battery->validate();
    if (dev.shapeable) {
      dev.shapeable->validate(dt);
      if (dev.shapeable->t_start < 0 || dev.shapeable->t_end > static_cast<int>(horizon)) {
        throw Error(ErrorCode::kOutOfRange, "shapeable window outside horizon at bus " + std::to_string(bus));
      }
    }
    if (dev.solar) dev.solar->validate(horizon);
    if (dev.load) dev.load->validate(horizon);
    if (dev.generator) {
      dev.generator->validate();
      if (feeder.bus(bus).kind != feeder::BusKind::kSubstationGen) {
        throw Error(ErrorCode::kInvalidArgument, "generator placed off the substation at bus " + std::to_string(bus));
      }
    }
  }
}

namespace {

json to_json(const GeneratorSpec& g) {
  json j = {{"alpha", g.alpha}, {"beta", g.beta}, {"gamma", g.gamma}, {"p_min", g.p_min}, {"p_max", g.p_max}};
  if (g.ramp) j["ramp"] = *g.ramp;
  if (g.q_min) j["q_min"] = *g.q_min;
  if (g.q_max) j["q_max"] = *g.q_max;
  return j;
}

json to_json(const BatterySpec& b) {
  return {{"eta_in", b.eta_in}, {"eta_out", b.eta_out}, {"p_cha_max", b.p_cha_max},
          {"p_dis_max", b.p_dis_max}, {"e_min", b.e_min}, {"e_max", b.e_max}, {"e_init", b.e_init}};
}

json to_json(const ShapeableLoadSpec& s) {
  return {{"e_demand", s.e_demand}, {"t_start", s.t_start}, {"t_end", s.t_end}, {"s_min", s.s_min},
          {"s_max", s.s_max}, {"u", s.u}, {"t_set", s.t_set}};
}

json to_json(const Profile& p) {
  json j = {{"values", p.values}};
  if (p.reactive) j["reactive"] = *p.reactive;
  return j;
}

GeneratorSpec generator_from_json(const json& j, int bus) {
  du::require_keys(j, {"alpha", "beta", "gamma", "p_min", "p_max"}, {"ramp", "q_min", "q_max"}, "generator");
  GeneratorSpec g;
  g.bus = bus;
  g.alpha = du::number(j["alpha"], "alpha");
  g.beta = du::number(j["beta"], "beta");
  g.gamma = du::number(j["gamma"], "gamma");
  g.p_min = du::number(j["p_min"], "p_min");
  g.p_max = du::number(j["p_max"], "p_max");
  g.ramp = du::opt_number(j, "ramp", "generator");
  g.q_min = du::opt_number(j, "q_min", "generator");
  g.q_max = du::opt_number(j, "q_max", "generator");
  return g;
}

BatterySpec battery_from_json(const json& j, int bus) {
  du::require_keys(j, {"eta_in", "eta_out", "p_cha_max", "p_dis_max", "e_min", "e_max", "e_init"}, {}, "battery");
  BatterySpec b;
  b.bus = bus;
  b.eta_in = du::number(j["eta_in"], "eta_in");
  b.eta_out = du::number(j["eta_out"], "eta_out");
  b.p_cha_max = du::number(j["p_cha_max"], "p_cha_max");
  b.p_dis_max = du::number(j["p_dis_max"], "p_dis_max");
  b.e_min = du::number(j["e_min"], "e_min");
  b.e_max = du::number(j["e_max"], "e_max");
  b.e_init = du::number(j["e_init"], "e_init");
  return b;
}

ShapeableLoadSpec shapeable_from_json(const json& j, int bus) {
  du::require_keys(j, {"e_demand", "t_start", "t_end", "s_min", "s_max"}, {"u", "t_set"}, "shapeable");
  ShapeableLoadSpec s;
  s.bus = bus;
  s.e_demand = du::number(j["e_demand"], "e_demand");
  s.t_start = du::integer(j["t_start"], "t_start");
  s.t_end = du::integer(j["t_end"], "t_end");
  s.s_min = du::number(j["s_min"], "s_min");
  s.s_max = du::number(j["s_max"], "s_max");
  if (j.contains("u")) s.u = du::number(j["u"], "u");
  if (j.contains("t_set")) s.t_set = du::integer(j["t_set"], "t_set");
  return s;
}

Profile profile_from_json(const json& j, int bus, ProfileKind kind) {
  du::require_keys(j, {"values"}, {"reactive"}, "profile");
  Profile p;
  p.bus = bus;
  p.kind = kind;
  p.values = du::numbers(j["values"], "values");
  if (j.contains("reactive")) p.reactive = du::numbers(j["reactive"], "reactive");
  return p;
}

}  // namespace

json to_json(const DeviceSet& devices) {
  json out = json::object();
  for (const auto& [bus, dev] : devices) {
    json j = json::object();
    if (dev.battery) j["battery"] = to_json(*dev.battery);
    if (dev.shapeable) j["shapeable"] = to_json(*dev.shapeable);
    if (dev.solar) j["solar_profile"] = to_json(*dev.solar);
    if (dev.load) j["load_profile"] = to_json(*dev.load);
    if (dev.generator) j["generator"] = to_json(*dev.generator);
    out[std::to_string(bus)] = j;
  }
  return out;
}

DeviceSet devices_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedDocument, "device document must be an object");
  DeviceSet out;
  for (const auto& item : doc.items()) {
    int bus = 0;
    try {
      std::size_t used = 0;
      bus = std::stoi(item.key(), &used);
      if (used != item.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedDocument, "device key '" + item.key() + "' is not a bus id");
    }
    const json& j = item.value();
    du::require_keys(j, {}, {"battery", "shapeable", "solar_profile", "load_profile", "generator"}, "devices");
    BusDevices dev;
    if (j.contains("battery")) dev.battery = battery_from_json(j["battery"], bus);
    if (j.contains("shapeable")) dev.shapeable = shapeable_from_json(j["shapeable"], bus);
    if (j.contains("solar_profile")) dev.solar = profile_from_json(j["solar_profile"], bus, ProfileKind::kSolar);
    if (j.contains("load_profile")) {
      dev.load = profile_from_json(j["load_profile"], bus, ProfileKind::kUncontrollableLoad);
    }
    if (j.contains("generator")) dev.generator = generator_from_json(j["generator"], bus);
    out[bus] = std::move(dev);
  }
  return out;
}

}  // namespace ces::ders
