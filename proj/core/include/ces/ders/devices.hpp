#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ces/feeder/feeder.hpp"

namespace ces::ders {

// Physical units throughout: MW, MVAr, MWh, hours, $.

struct GeneratorSpec {
  int bus = 1;
  double alpha = 0.0;  // $/MW^2 per step
  double beta = 0.0;   // $/MW
  double gamma = 0.0;  // $
  double p_min = 0.0;
  double p_max = 0.0;
  std::optional<double> ramp;  // MW per step
  std::optional<double> q_min;
  std::optional<double> q_max;

  void validate() const;
};

struct BatterySpec {
  int bus = 0;
  double eta_in = 1.0;
  double eta_out = 1.0;
  double p_cha_max = 0.0;
  double p_dis_max = 0.0;
  double e_min = 0.0;
  double e_max = 0.0;
  double e_init = 0.0;

  void validate() const;
};

// e[t] is the stored energy at the end of step t; the energy before step 0 is
// BatterySpec::e_init.
struct BatteryTrajectory {
  std::vector<double> e;
  std::vector<double> h;  // charging power
  std::vector<double> d;  // discharging power

  std::vector<double> p_b() const;  // d - h
};

// Admissible window is the half-open hour range [t_start, t_end).
struct ShapeableLoadSpec {
  int bus = 0;
  double e_demand = 0.0;
  int t_start = 0;
  int t_end = 0;
  double s_min = 0.0;
  double s_max = 0.0;
  double u = 0.0;  // urgency weight
  int t_set = -1;  // disutility applies for t <= t_set

  void validate(double dt) const;
};

enum class ProfileKind { kUncontrollableLoad, kSolar };

struct Profile {
  int bus = 0;
  ProfileKind kind = ProfileKind::kUncontrollableLoad;
  std::vector<double> values;
  std::optional<std::vector<double>> reactive;

  void validate(std::size_t horizon) const;
};

struct BusDevices {
  std::optional<BatterySpec> battery;
  std::optional<ShapeableLoadSpec> shapeable;
  std::optional<Profile> solar;
  std::optional<Profile> load;
  std::optional<GeneratorSpec> generator;
};

using DeviceSet = std::map<int, BusDevices>;

struct Violation {
  std::string constraint;
  int t = -1;
};

struct FeasibilityReport {
  bool ok = true;
  std::optional<Violation> violation;

  explicit operator bool() const { return ok; }
};

double battery_transition(const BatterySpec& spec, double e_prev, double h, double d, double dt);

// Violation names: "charge_limit", "discharge_limit", "energy_bounds", "state_update", "length".
FeasibilityReport battery_feasible(const BatterySpec& spec, const BatteryTrajectory& traj,
                                   double dt, double tol = 1e-8);

// Violation names: "outside_window", "power_bounds", "energy_demand", "length".
FeasibilityReport shapeable_feasible(const ShapeableLoadSpec& spec, const std::vector<double>& series,
                                     double dt, double tol = 1e-8);

double generation_cost(const GeneratorSpec& spec, double p);

double disutility(const ShapeableLoadSpec& spec, double s_t, int t);

// Signed real-power components at one bus and step.
struct InjectionComponents {
  double p_g = 0.0;
  double p_b = 0.0;
  double p_r = 0.0;
  double p_u = 0.0;
  double p_s = 0.0;
  std::optional<feeder::CtClass> ct_class;
  // CT2 users that neither trade nor sell have their DER terms excluded.
  bool ct2_active = false;
};

double net_injection(const InjectionComponents& c);
// Throws Error{kNotCt2} unless the components belong to a CT2 bus.
double ct2_net_injection(const InjectionComponents& c);

void validate_devices(const DeviceSet& devices, const feeder::Feeder& feeder, std::size_t horizon,
                      double dt);

nlohmann::json to_json(const DeviceSet& devices);
DeviceSet devices_from_json(const nlohmann::json& doc);

}  // namespace ces::ders
