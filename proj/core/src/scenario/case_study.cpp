#include "ces/scenario/case_study.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <numbers>
#include <random>
#include <sstream>

#include "../common/json_util.hpp"
#include "ces/common/error.hpp"
#include "ces/convex/solver.hpp"
#include "ces/ledger/crypto.hpp"

namespace ces::scenario {

using nlohmann::json;

namespace {

class Stream {
 public:
  explicit Stream(std::initializer_list<std::uint32_t> words) {
    std::seed_seq seq(words);
    rng_.seed(seq);
  }
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return rng_(); }
  // Box-Muller on two portable uniforms.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
};

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

void check_window(std::pair<int, int> w, const char* what) {
  if (w.first < 0 || w.second > 24 || w.first >= w.second) {
    throw Error(ErrorCode::kOutOfRange, std::string(what) + " window outside the day");
  }
}

json read_document(const std::string& name, const char* suffix) {
  if (name.find('/') == std::string::npos && name.find('.') == std::string::npos) {
    return json::parse(feeder::bundled_document(name + suffix));
  }
  std::ifstream in(name);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + name);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedDocument, name + ": " + e.what());
  }
}

feeder::Feeder load_feeder_by_name(const std::string& name) {
  if (name == "sce56" || name == "two-bus") return feeder::builtin_feeder(name);
  return feeder::load_feeder(name);
}

}  // namespace

void ScenarioRecipe::validate() const {
  for (double r : {battery_ratio, solar_ratio, shapeable_ratio}) {
    if (!(r >= 0.0 && r <= 2.0)) throw Error(ErrorCode::kOutOfRange, "recipe ratios must lie in [0, 2]");
  }
  if (!(battery_hours >= 0.0) || !(battery_init_soc >= 0.0 && battery_init_soc <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "battery hours must be >= 0 and initial SOC in [0, 1]");
  }
  check_window(shapeable_window, "shapeable");
  check_window(solar_window, "solar");
  if (shapeable_duration.first < 1 || shapeable_duration.first > shapeable_duration.second) {
    throw Error(ErrorCode::kOutOfRange, "invalid shapeable duration range");
  }
  if (shapeable_duration.second > shapeable_window.second - shapeable_window.first) {
    throw Error(ErrorCode::kInfeasible, "shapeable duration exceeds its window");
  }
  if (!(forecast_noise >= 0.0)) throw Error(ErrorCode::kOutOfRange, "forecast noise must be >= 0");
  if (!(gen_p_max > 0.0) || gen_alpha < 0.0) throw Error(ErrorCode::kInvalidArgument, "invalid generator");
}

json to_json(const ScenarioRecipe& r) {
  return {{"feeder", r.feeder},
          {"loads", r.loads},
          {"battery_ratio", r.battery_ratio},
          {"battery_hours", r.battery_hours},
          {"battery_init_soc", r.battery_init_soc},
          {"solar_ratio", r.solar_ratio},
          {"shapeable_ratio", r.shapeable_ratio},
          {"shapeable_duration", {r.shapeable_duration.first, r.shapeable_duration.second}},
          {"shapeable_window", {r.shapeable_window.first, r.shapeable_window.second}},
          {"solar_window", {r.solar_window.first, r.solar_window.second}},
          {"forecast_noise", r.forecast_noise},
          {"seed", r.seed},
          {"generator", {{"alpha", r.gen_alpha}, {"beta", r.gen_beta}, {"gamma", r.gen_gamma}, {"p_max", r.gen_p_max}}}};
}

ScenarioRecipe recipe_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kMalformedDocument, "recipe must be an object");
  detail::require_keys(j, {},
                       {"feeder", "loads", "battery_ratio", "battery_hours", "battery_init_soc", "solar_ratio",
                        "shapeable_ratio", "shapeable_duration", "shapeable_window", "solar_window",
                        "forecast_noise", "seed", "generator"},
                       "recipe");
  ScenarioRecipe r;
  auto pair_of = [&](const char* key, std::pair<int, int>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
      throw Error(ErrorCode::kMalformedDocument, std::string("recipe.") + key + " must be [int, int]");
    }
    out = {v[0].get<int>(), v[1].get<int>()};
  };
  if (j.contains("feeder")) r.feeder = detail::string(j.at("feeder"), "recipe.feeder");
  if (j.contains("loads")) r.loads = detail::string(j.at("loads"), "recipe.loads");
  r.battery_ratio = detail::opt_number(j, "battery_ratio", "recipe").value_or(r.battery_ratio);
  r.battery_hours = detail::opt_number(j, "battery_hours", "recipe").value_or(r.battery_hours);
  r.battery_init_soc = detail::opt_number(j, "battery_init_soc", "recipe").value_or(r.battery_init_soc);
  r.solar_ratio = detail::opt_number(j, "solar_ratio", "recipe").value_or(r.solar_ratio);
  r.shapeable_ratio = detail::opt_number(j, "shapeable_ratio", "recipe").value_or(r.shapeable_ratio);
  r.forecast_noise = detail::opt_number(j, "forecast_noise", "recipe").value_or(r.forecast_noise);
  pair_of("shapeable_duration", r.shapeable_duration);
  pair_of("shapeable_window", r.shapeable_window);
  pair_of("solar_window", r.solar_window);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw Error(ErrorCode::kMalformedDocument, "recipe.seed must be unsigned");
    r.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    detail::require_keys(g, {}, {"alpha", "beta", "gamma", "p_max"}, "recipe.generator");
    r.gen_alpha = detail::opt_number(g, "alpha", "recipe.generator").value_or(r.gen_alpha);
    r.gen_beta = detail::opt_number(g, "beta", "recipe.generator").value_or(r.gen_beta);
    r.gen_gamma = detail::opt_number(g, "gamma", "recipe.generator").value_or(r.gen_gamma);
    r.gen_p_max = detail::opt_number(g, "p_max", "recipe.generator").value_or(r.gen_p_max);
  }
  r.validate();
  return r;
}

std::vector<double> synth_load_profile(double peak, std::uint64_t seed, std::size_t horizon) {
  if (!(peak > 0.0)) throw Error(ErrorCode::kInvalidArgument, "peak load must be positive");
  Stream rng{lo32(seed), hi32(seed), 0x10adu};
  const double c1 = 9.0 + rng.uniform(-0.5, 0.5), c2 = 19.0 + rng.uniform(-0.5, 0.5);
  const double w1 = rng.uniform(1.5, 2.5), w2 = rng.uniform(2.0, 3.0);
  const double a1 = rng.uniform(0.6, 0.9), a2 = rng.uniform(0.8, 1.0);
  std::vector<double> g(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    const double h = static_cast<double>(t);
    g[t] = 0.2 + a1 * std::exp(-(h - c1) * (h - c1) / (2 * w1 * w1)) +
           a2 * std::exp(-(h - c2) * (h - c2) / (2 * w2 * w2));
  }
  const auto [mn, mx] = std::minmax_element(g.begin(), g.end());
  const double lo = *mn, span = *mx - *mn;
  std::vector<double> out(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    out[t] = span > 0.0 ? peak * (0.3 + 0.7 * (g[t] - lo) / span) : peak;
  }
  return out;
}

std::vector<double> synth_solar_profile(double peak_load, double ratio, std::pair<int, int> window,
                                        std::size_t horizon) {
  if (!(ratio >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "solar ratio must be >= 0");
  std::vector<double> out(horizon, 0.0);
  const double span = window.second - window.first + 1;
  for (int t = window.first; t < window.second && t < static_cast<int>(horizon); ++t) {
    out[static_cast<std::size_t>(t)] =
        ratio * peak_load * std::sin(std::numbers::pi * (t - window.first + 1) / span);
  }
  return out;
}

bool is_prime(int n) {
  if (n < 2) return false;
  for (int d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

ders::Registry assign_ct_classes(const feeder::Feeder& f, std::size_t horizon) {
  ders::Registry reg;
  for (const auto& b : f.buses) {
    ders::Crowdsourcee c;
    c.bus = b.id;
    c.ct_class = is_prime(b.id) ? feeder::CtClass::kCt2 : feeder::CtClass::kCt1;
    c.preferences.sell_to_utility.assign(horizon, false);
    reg[b.id] = c;
  }
  return reg;
}

market::Scenario build_case_study(const ScenarioRecipe& recipe) {
  recipe.validate();
  market::Scenario s;
  s.name = recipe.feeder;
  s.feeder = load_feeder_by_name(recipe.feeder);
  s.horizon = 24;
  s.dt = 1.0;
  const json loads = read_document(recipe.loads, ".loads.json");
  const double pf = detail::number(loads.at("power_factor"), "loads.power_factor");
  const double q_ratio = std::tan(std::acos(pf));

  ders::GeneratorSpec gen;
  gen.alpha = recipe.gen_alpha;
  gen.beta = recipe.gen_beta;
  gen.gamma = recipe.gen_gamma;
  gen.p_min = 0.0;
  gen.p_max = recipe.gen_p_max;
  s.devices[1].generator = gen;
  s.crowdsourcees = assign_ct_classes(s.feeder, s.horizon);

  for (const auto& entry : loads.at("peak_load_mw")) {
    const int bus = detail::integer(entry.at("bus"), "loads.bus");
    const double peak = detail::number(entry.at("mw"), "loads.mw");
    if (!s.feeder.has_bus(bus)) throw Error(ErrorCode::kUnknownBus, "peak load at unknown bus " + std::to_string(bus));
    const std::uint64_t bus_seed = recipe.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(bus);
    auto& dev = s.devices[bus];
    ders::Profile load{bus, ders::ProfileKind::kUncontrollableLoad, synth_load_profile(peak, bus_seed, s.horizon),
                       std::nullopt};
    std::vector<double> q(s.horizon);
    for (std::size_t t = 0; t < s.horizon; ++t) q[t] = load.values[t] * q_ratio;
    load.reactive = std::move(q);
    dev.load = std::move(load);
    if (recipe.solar_ratio > 0.0) {
      dev.solar = ders::Profile{bus, ders::ProfileKind::kSolar,
                                synth_solar_profile(peak, recipe.solar_ratio, recipe.solar_window, s.horizon),
                                std::nullopt};
    }
    if (recipe.battery_ratio > 0.0 && recipe.battery_hours > 0.0) {
      ders::BatterySpec b;
      b.bus = bus;
      b.eta_in = b.eta_out = 0.95;
      b.p_cha_max = b.p_dis_max = recipe.battery_ratio * peak;
      b.e_min = 0.0;
      b.e_max = b.p_cha_max * recipe.battery_hours;
      b.e_init = recipe.battery_init_soc * b.e_max;
      dev.battery = b;
    }
    if (recipe.shapeable_ratio > 0.0) {
      Stream rng{lo32(bus_seed), hi32(bus_seed), 0x5aa9u};
      const int span = recipe.shapeable_duration.second - recipe.shapeable_duration.first + 1;
      const int hours = recipe.shapeable_duration.first + static_cast<int>(rng.next() % static_cast<unsigned>(span));
      ders::ShapeableLoadSpec sh;
      sh.bus = bus;
      sh.s_min = 0.0;
      sh.s_max = recipe.shapeable_ratio * peak;
      sh.e_demand = sh.s_max * hours * s.dt;
      sh.t_start = recipe.shapeable_window.first;
      sh.t_end = recipe.shapeable_window.second;
      sh.u = rng.uniform(0.05, 0.5);
      sh.t_set = sh.t_start + hours - 1;
      dev.shapeable = sh;
    }
  }

  // Node 2 sells surplus solar in the morning and runs its shapeable load in
  // the evening.
  if (s.crowdsourcees.count(2) && s.crowdsourcees[2].ct_class == feeder::CtClass::kCt2) {
    auto& prefs = s.crowdsourcees[2].preferences;
    for (int t = 6; t < 14; ++t) prefs.sell_to_utility[static_cast<std::size_t>(t)] = true;
    if (auto& sh = s.devices[2].shapeable) {
      const int hours = std::min(6, static_cast<int>(std::lround(sh->e_demand / (sh->s_max * s.dt))));
      sh->t_start = 17;
      sh->t_end = 23;
      sh->e_demand = sh->s_max * hours * s.dt;
      sh->t_set = sh->t_start + hours - 1;
      prefs.shapeable_schedule = market::asap_schedule(*sh, s.horizon, s.dt);
    }
  }
  // Node 53 sells 0.119 MWh to Node 43 between 9 am and 2 pm.
  if (s.crowdsourcees.count(53) && s.crowdsourcees.count(43)) {
    ders::TradeRequest tr;
    tr.id = "trade-53-43";
    tr.seller_bus = 53;
    tr.buyer_bus = 43;
    tr.ett_type = ders::EttType::kB;
    tr.window_start = 9;
    tr.window_end = 14;
    tr.energy = 0.119;
    s.trades.push_back(tr);
    s.crowdsourcees[53].preferences.p2p_trades.push_back(tr);
  }
  market::validate(s);
  return s;
}

namespace {

// Copper-plate check: can scaled solar plus aggregate storage serve every load
// (grown by the loss margin) with the shapeable demands placed in their windows?
double unserved_energy(const market::Scenario& s, double k, double margin) {
  convex::ConicProblem p;
  const std::size_t T = s.horizon;
  double e_max = 0.0, e_init = 0.0, p_cha = 0.0, p_dis = 0.0, eta_in = 1.0, eta_out = 1.0;
  for (const auto& [bus, dev] : s.devices) {
    if (!dev.battery) continue;
    e_max += dev.battery->e_max;
    e_init += dev.battery->e_init;
    p_cha += dev.battery->p_cha_max;
    p_dis += dev.battery->p_dis_max;
    eta_in = dev.battery->eta_in;
    eta_out = dev.battery->eta_out;
  }
  std::vector<convex::LinearExpr> balance(T);
  std::vector<double> rhs(T, 0.0);
  std::optional<std::size_t> prev_e;
  for (std::size_t t = 0; t < T; ++t) {
    const auto e = p.add_variable(), h = p.add_variable(), d = p.add_variable(), u = p.add_variable();
    const auto spill = p.add_variable();
    p.add_bounds(e, 0.0, k * e_max, "");
    p.add_bounds(h, 0.0, k * p_cha, "");
    p.add_bounds(d, 0.0, k * p_dis, "");
    p.add_bounds(u, 0.0, std::nullopt, "");
    p.add_bounds(spill, 0.0, std::nullopt, "");
    p.objective().add_linear(u, 1.0);
    convex::LinearExpr dyn = {{e, 1.0}, {h, -eta_in * s.dt}, {d, s.dt / eta_out}};
    if (prev_e) dyn.push_back({*prev_e, -1.0});
    p.add_equality(std::move(dyn), prev_e ? 0.0 : k * e_init, "");
    prev_e = e;
    double solar = 0.0, load = 0.0;
    for (const auto& [bus, dev] : s.devices) {
      if (dev.solar) solar += dev.solar->values[t];
      if (dev.load) load += dev.load->values[t];
    }
    balance[t] = {{d, 1.0}, {h, -1.0}, {u, 1.0}, {spill, -1.0}};
    rhs[t] = (1.0 + margin) * load - k * solar;
  }
  for (const auto& [bus, dev] : s.devices) {
    if (!dev.shapeable) continue;
    const auto& sh = *dev.shapeable;
    convex::LinearExpr energy;
    for (int t = sh.t_start; t < sh.t_end; ++t) {
      const auto v = p.add_variable();
      p.add_bounds(v, sh.s_min, sh.s_max, "");
      energy.push_back({v, s.dt});
      balance[static_cast<std::size_t>(t)].push_back({v, -(1.0 + margin)});
    }
    p.add_equality(std::move(energy), sh.e_demand, "");
  }
  for (std::size_t t = 0; t < T; ++t) p.add_equality(std::move(balance[t]), rhs[t], "");
  auto sol = convex::solve(p);
  if (sol.status != convex::Status::kOptimal) return std::numeric_limits<double>::infinity();
  return sol.objective_value;
}

}  // namespace

IslandedCase islanded_variant(const market::Scenario& base, double min_scale) {
  constexpr double kMargin = 0.05;
  constexpr double kCap = 5.0;
  constexpr double kTol = 1e-6;
  market::Scenario s = base;
  s.name = base.name + "-islanded";
  // Fixed-zero generation leaves a degenerate optimum where the KKT solves
  // stall in the 1e-8 range; the library default accuracy is enough here.
  s.options.solver.tol = convex::SolverOptions{}.tol;
  for (auto& [bus, dev] : s.devices) {
    if (dev.generator) dev.generator->p_max = dev.generator->p_min = 0.0;
  }
  s.trades.clear();
  for (auto& [bus, c] : s.crowdsourcees) {
    c.ct_class = feeder::CtClass::kCt1;
    std::fill(c.preferences.sell_to_utility.begin(), c.preferences.sell_to_utility.end(), false);
    c.preferences.p2p_trades.clear();
    c.preferences.battery_schedule.reset();
    c.preferences.shapeable_schedule.reset();
  }
  auto scaled = [&](double k) {
    market::Scenario out = s;
    for (auto& [bus, dev] : out.devices) {
      if (dev.solar) {
        for (double& v : dev.solar->values) v *= k;
      }
      if (dev.battery) {
        auto& b = *dev.battery;
        b.e_max *= k;
        b.e_init *= k;
        b.e_min *= k;
        b.p_cha_max *= k;
        b.p_dis_max *= k;
      }
    }
    return out;
  };
  double lo = std::max(1.0, min_scale);
  if (lo > kCap || unserved_energy(s, kCap, kMargin) > kTol) {
    throw Error(ErrorCode::kInfeasible, "islanded balance not reachable with solar and storage scaled by 5");
  }
  double hi = kCap;
  if (unserved_energy(s, lo, kMargin) <= kTol) {
    hi = lo;
  } else {
    for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
      const double mid = 0.5 * (lo + hi);
      (unserved_energy(s, mid, kMargin) <= kTol ? hi : lo) = mid;
    }
  }
  return {scaled(hi), hi, hi};
}

double forecast_error(double noise, std::uint64_t seed, int bus, int t, int stream) {
  if (!(noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "forecast noise must be >= 0");
  if (noise == 0.0) return 0.0;
  Stream rng{lo32(seed), hi32(seed), static_cast<std::uint32_t>(bus), static_cast<std::uint32_t>(t),
             static_cast<std::uint32_t>(stream)};
  return std::clamp(noise * rng.normal(), -3.0 * noise, 3.0 * noise);
}

double hour_ahead_forecast(const std::vector<double>& day_ahead, int t, double noise, std::uint64_t seed, int bus,
                           int stream) {
  const double base = day_ahead.at(static_cast<std::size_t>(t));
  if (noise == 0.0) return base;
  return std::max(0.0, base * (1.0 + forecast_error(noise, seed, bus, t, stream)));
}

market::HourAheadForecast hour_ahead(const market::Scenario& s, int t, double noise, std::uint64_t seed) {
  auto f = market::perfect_forecast(s, t);
  for (const auto& [bus, dev] : s.devices) {
    if (dev.load) {
      const double eps = forecast_error(noise, seed, bus, t, 0);
      f.load_p[bus] = std::max(0.0, f.load_p[bus] * (1.0 + eps));
      f.load_q[bus] = std::max(0.0, f.load_q[bus] * (1.0 + eps));
    }
    if (dev.solar) f.solar[bus] = hour_ahead_forecast(dev.solar->values, t, noise, seed, bus, 1);
  }
  return f;
}

std::string scenario_hash(const market::Scenario& s) {
  json trades = json::array();
  for (const auto& tr : s.trades) trades.push_back(ders::to_json(tr));
  const json doc = {{"feeder", feeder::to_json(s.feeder)}, {"devices", ders::to_json(s.devices)},
                    {"registry", ders::to_json(s.crowdsourcees)}, {"trades", trades},
                    {"horizon", s.horizon}, {"dt", s.dt}};
  return ledger::sha256_hex(doc.dump());
}

json manifest(const market::Scenario& s, const ScenarioRecipe& recipe) {
  return {{"recipe", to_json(recipe)},
          {"scenario", s.name},
          {"scenario_hash", scenario_hash(s)},
          {"feeder_hash", ledger::sha256_hex(feeder::to_json(s.feeder).dump())},
          {"devices_hash", ledger::sha256_hex(ders::to_json(s.devices).dump())},
          {"registry_hash", ledger::sha256_hex(ders::to_json(s.crowdsourcees).dump())},
          {"horizon", s.horizon},
          {"dt", s.dt},
          {"hash", "sha256"},
          {"signature", "ed25519"}};
}

}  // namespace ces::scenario
