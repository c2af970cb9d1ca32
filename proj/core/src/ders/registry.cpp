#include "ces/ders/registry.hpp"

#include <algorithm>

#include "ces/common/error.hpp"
#include "common/json_util.hpp"

namespace ces::ders {

using nlohmann::json;
namespace du = ces::detail;

std::string_view to_string(EttType type) { return type == EttType::kA ? "A" : "B"; }

EttType parse_ett_type(std::string_view text) {
  if (text == "A") return EttType::kA;
  if (text == "B") return EttType::kB;
  throw Error(ErrorCode::kMalformedDocument, "unknown ETT type '" + std::string(text) + "'");
}

double TradeRequest::power(double dt) const {
  const int steps = window_end - window_start;
  if (steps <= 0 || !(dt > 0.0)) return 0.0;
  return energy / (steps * dt);
}

bool is_ct2(const Registry& registry, int bus) {
  auto it = registry.find(bus);
  return it != registry.end() && it->second.ct_class == feeder::CtClass::kCt2;
}

bool ct2_excluded(const Crowdsourcee& c) {
  if (c.ct_class != feeder::CtClass::kCt2) return false;
  const auto& p = c.preferences;
  bool sells = std::any_of(p.sell_to_utility.begin(), p.sell_to_utility.end(), [](bool b) { return b; });
  return !sells && p.p2p_trades.empty();
}

void validate_trade(const TradeRequest& trade, const Registry& registry, std::size_t horizon) {
  if (!(trade.energy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "trade energy must be positive");
  if (trade.window_start < 0 || trade.window_end > static_cast<int>(horizon) ||
      trade.window_start >= trade.window_end) {
    throw Error(ErrorCode::kOutOfRange, "trade window outside the horizon");
  }
  if (!registry.count(trade.seller_bus)) {
    throw Error(ErrorCode::kUnknownBus, "trade seller bus " + std::to_string(trade.seller_bus) + " is not a crowdsourcee");
  }
  if (trade.ett_type == EttType::kB) {
    if (!trade.buyer_bus) throw Error(ErrorCode::kInvalidArgument, "Type B trade needs a buyer bus");
    if (!registry.count(*trade.buyer_bus)) {
      throw Error(ErrorCode::kUnknownBus, "trade buyer bus " + std::to_string(*trade.buyer_bus) + " is not a crowdsourcee");
    }
    if (*trade.buyer_bus == trade.seller_bus) throw Error(ErrorCode::kInvalidArgument, "trade with oneself");
    if (!is_ct2(registry, trade.seller_bus) || !is_ct2(registry, *trade.buyer_bus)) {
      throw Error(ErrorCode::kNotCt2, "Type B trades are restricted to CT2 crowdsourcees");
    }
  } else if (trade.buyer_bus) {
    throw Error(ErrorCode::kInvalidArgument, "Type A trades sell to the utility and take no buyer bus");
  }
  if (trade.price && !(*trade.price >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative trade price");
}

json to_json(const TradeRequest& t) {
  json j = {{"id", t.id}, {"seller_bus", t.seller_bus}, {"ett_type", to_string(t.ett_type)},
            {"window", {t.window_start, t.window_end}}, {"energy", t.energy}};
  j["buyer_bus"] = t.buyer_bus ? json(*t.buyer_bus) : json(nullptr);
  j["price"] = t.price ? json(*t.price) : json(nullptr);
  return j;
}

TradeRequest trade_from_json(const json& j) {
  du::require_keys(j, {"seller_bus", "ett_type", "window", "energy"}, {"id", "buyer_bus", "price"}, "trade");
  TradeRequest t;
  if (j.contains("id")) t.id = du::string(j["id"], "trade id");
  t.seller_bus = du::integer(j["seller_bus"], "seller_bus");
  t.ett_type = parse_ett_type(du::string(j["ett_type"], "ett_type"));
  const auto& w = j["window"];
  if (!w.is_array() || w.size() != 2) throw Error(ErrorCode::kMalformedDocument, "trade window must be [start, end]");
  t.window_start = du::integer(w[0], "window start");
  t.window_end = du::integer(w[1], "window end");
  t.energy = du::number(j["energy"], "energy");
  if (j.contains("buyer_bus") && !j["buyer_bus"].is_null()) t.buyer_bus = du::integer(j["buyer_bus"], "buyer_bus");
  if (j.contains("price") && !j["price"].is_null()) t.price = du::number(j["price"], "price");
  return t;
}

json to_json(const PreferenceSet& p) {
  json trades = json::array();
  for (const auto& t : p.p2p_trades) trades.push_back(to_json(t));
  json j = {{"sell_to_utility", p.sell_to_utility}, {"p2p_trades", trades}};
  if (p.urgency) j["urgency"] = *p.urgency;
  if (p.t_set) j["t_set"] = *p.t_set;
  if (p.battery_schedule) j["battery_schedule"] = *p.battery_schedule;
  if (p.shapeable_schedule) j["shapeable_schedule"] = *p.shapeable_schedule;
  return j;
}

PreferenceSet preferences_from_json(const json& j) {
  du::require_keys(j, {}, {"sell_to_utility", "p2p_trades", "urgency", "t_set", "battery_schedule",
                           "shapeable_schedule"}, "preferences");
  PreferenceSet p;
  if (j.contains("sell_to_utility")) {
    if (!j["sell_to_utility"].is_array()) throw Error(ErrorCode::kMalformedDocument, "sell_to_utility must be an array");
    for (const auto& b : j["sell_to_utility"]) p.sell_to_utility.push_back(du::boolean(b, "sell_to_utility"));
  }
  if (j.contains("p2p_trades")) {
    if (!j["p2p_trades"].is_array()) throw Error(ErrorCode::kMalformedDocument, "p2p_trades must be an array");
    for (const auto& t : j["p2p_trades"]) p.p2p_trades.push_back(trade_from_json(t));
  }
  p.urgency = du::opt_number(j, "urgency", "preferences");
  if (j.contains("t_set")) p.t_set = du::integer(j["t_set"], "t_set");
  if (j.contains("battery_schedule")) p.battery_schedule = du::numbers(j["battery_schedule"], "battery_schedule");
  if (j.contains("shapeable_schedule")) {
    p.shapeable_schedule = du::numbers(j["shapeable_schedule"], "shapeable_schedule");
  }
  if (p.urgency && (*p.urgency < 0.0 || *p.urgency > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "urgency outside [0, 1]");
  }
  return p;
}

json to_json(const Registry& registry) {
  json out = json::array();
  for (const auto& [bus, c] : registry) {
    out.push_back({{"bus", bus}, {"ct_class", feeder::to_string(c.ct_class)}, {"preferences", to_json(c.preferences)}});
  }
  return out;
}

Registry registry_from_json(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::kMalformedDocument, "registry must be an array");
  Registry out;
  for (const auto& j : doc) {
    du::require_keys(j, {"bus", "ct_class"}, {"preferences"}, "crowdsourcee");
    Crowdsourcee c;
    c.bus = du::integer(j["bus"], "bus");
    c.ct_class = feeder::parse_ct_class(du::string(j["ct_class"], "ct_class"));
    if (j.contains("preferences")) c.preferences = preferences_from_json(j["preferences"]);
    if (!out.emplace(c.bus, std::move(c)).second) {
      throw Error(ErrorCode::kDuplicateId, "crowdsourcee listed twice");
    }
  }
  return out;
}

}  // namespace ces::ders
