#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ces/feeder/feeder.hpp"

namespace ces::ders {

enum class EttType { kA, kB };

std::string_view to_string(EttType type);
EttType parse_ett_type(std::string_view text);

// A fixed constant-power schedule over the half-open hour range
// [window_start, window_end). Type A trades have no buyer (the utility).
struct TradeRequest {
  std::string id;
  int seller_bus = 0;
  std::optional<int> buyer_bus;
  EttType ett_type = EttType::kB;
  int window_start = 0;
  int window_end = 0;
  double energy = 0.0;  // MWh
  std::optional<double> price;  // $/MWh

  double power(double dt) const;  // MW during each window step
  bool active(int t) const { return t >= window_start && t < window_end; }
};

struct PreferenceSet {
  std::vector<bool> sell_to_utility;  // per hour, CT2
  std::vector<TradeRequest> p2p_trades;
  std::optional<double> urgency;
  std::optional<int> t_set;
  // Declared CT2 device behaviour (MW per hour); battery positive = discharge.
  std::optional<std::vector<double>> battery_schedule;
  std::optional<std::vector<double>> shapeable_schedule;
};

struct Crowdsourcee {
  int bus = 0;
  feeder::CtClass ct_class = feeder::CtClass::kCt1;
  PreferenceSet preferences;
};

using Registry = std::map<int, Crowdsourcee>;

// Type B needs CT2 on both ends; energy must be positive; window sane.
// Throws Error{kInvalidArgument | kUnknownBus | kNotCt2}.
void validate_trade(const TradeRequest& trade, const Registry& registry, std::size_t horizon);

bool is_ct2(const Registry& registry, int bus);
// True when a CT2 user declares no trades and no sell flags.
bool ct2_excluded(const Crowdsourcee& c);

nlohmann::json to_json(const TradeRequest& trade);
TradeRequest trade_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PreferenceSet& prefs);
PreferenceSet preferences_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Registry& registry);
Registry registry_from_json(const nlohmann::json& doc);

}  // namespace ces::ders
