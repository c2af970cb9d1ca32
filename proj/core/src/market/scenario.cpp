#include "ces/market/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "ces/common/error.hpp"

namespace ces::market {

const ders::GeneratorSpec& Scenario::generator() const {
  auto it = devices.find(1);
  if (it == devices.end() || !it->second.generator) {
    throw Error(ErrorCode::kInvalidArgument, "scenario has no substation generator at bus 1");
  }
  return *it->second.generator;
}

double Scenario::loss_price() const {
  if (options.loss_price) return *options.loss_price;
  double sum = 0.0;
  int count = 0;
  for (const auto& [bus, dev] : devices) {
    if (dev.generator) {
      sum += dev.generator->beta;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

std::optional<feeder::CtClass> Scenario::ct_class(int bus) const {
  auto it = crowdsourcees.find(bus);
  if (it == crowdsourcees.end()) return std::nullopt;
  return it->second.ct_class;
}

double Scenario::committed(int bus, int t) const {
  double mw = 0.0;
  for (const auto& tr : trades) {
    if (!tr.active(t)) continue;
    if (tr.seller_bus == bus) mw += tr.power(dt);
    if (tr.buyer_bus && *tr.buyer_bus == bus) mw -= tr.power(dt);
  }
  return mw;
}

void validate(const Scenario& s) {
  feeder::validate(s.feeder);
  if (s.horizon == 0 || !(s.dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "horizon and dt must be positive");
  ders::validate_devices(s.devices, s.feeder, s.horizon, s.dt);
  int gens = 0;
  for (const auto& [bus, dev] : s.devices) gens += dev.generator ? 1 : 0;
  if (gens != 1) throw Error(ErrorCode::kInvalidArgument, "scenario needs exactly one substation generator");
  s.generator();
  for (const auto& [bus, c] : s.crowdsourcees) {
    if (!s.feeder.has_bus(bus) || c.bus != bus) {
      throw Error(ErrorCode::kUnknownBus, "crowdsourcee at unknown bus " + std::to_string(bus));
    }
    const auto& p = c.preferences;
    if (!p.sell_to_utility.empty() && p.sell_to_utility.size() != s.horizon) {
      throw Error(ErrorCode::kDimensionMismatch, "sell flags length differs from horizon at bus " + std::to_string(bus));
    }
    for (const auto* sched : {&p.battery_schedule, &p.shapeable_schedule}) {
      if (*sched && (*sched)->size() != s.horizon) {
        throw Error(ErrorCode::kDimensionMismatch, "declared schedule length differs from horizon at bus " +
                                                       std::to_string(bus));
      }
    }
  }
  for (const auto& [bus, dev] : s.devices) {
    if ((dev.battery || dev.shapeable) && !s.crowdsourcees.count(bus)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "controllable device at bus " + std::to_string(bus) + " which is not a crowdsourcee");
    }
  }
  for (const auto& tr : s.trades) {
    ders::validate_trade(tr, s.crowdsourcees, s.horizon);
    if (tr.ett_type != ders::EttType::kB) {
      throw Error(ErrorCode::kInvalidArgument, "only Type B trades are pinned in the day-ahead schedule");
    }
  }
}

std::vector<double> asap_schedule(const ders::ShapeableLoadSpec& spec, std::size_t horizon, double dt) {
  std::vector<double> out(horizon, 0.0);
  const int span = spec.t_end - spec.t_start;
  double extra = spec.e_demand - spec.s_min * span * dt;
  for (int t = spec.t_start; t < spec.t_end && t < static_cast<int>(horizon); ++t) {
    const double add = std::clamp(extra / dt, 0.0, spec.s_max - spec.s_min);
    out[static_cast<std::size_t>(t)] = spec.s_min + add;
    extra -= add * dt;
  }
  return out;
}

Scenario baseline_scenario(const Scenario& s) {
  Scenario b = s;
  b.name = s.name + "-baseline";
  b.trades.clear();
  for (auto& [bus, dev] : b.devices) {
    dev.battery.reset();
    dev.solar.reset();
    if (!dev.shapeable) continue;
    auto sched = asap_schedule(*dev.shapeable, s.horizon, s.dt);
    if (auto c = s.crowdsourcees.find(bus); c != s.crowdsourcees.end() && c->second.preferences.shapeable_schedule) {
      sched = *c->second.preferences.shapeable_schedule;
    }
    if (!dev.load) {
      dev.load = ders::Profile{bus, ders::ProfileKind::kUncontrollableLoad, std::vector<double>(s.horizon, 0.0),
                               std::nullopt};
    }
    for (std::size_t t = 0; t < s.horizon; ++t) dev.load->values[t] += sched[t];
    dev.shapeable.reset();
  }
  for (auto& [bus, c] : b.crowdsourcees) {
    c.preferences.p2p_trades.clear();
    std::fill(c.preferences.sell_to_utility.begin(), c.preferences.sell_to_utility.end(), false);
    c.preferences.battery_schedule.reset();
    c.preferences.shapeable_schedule.reset();
  }
  return b;
}

}  // namespace ces::market
