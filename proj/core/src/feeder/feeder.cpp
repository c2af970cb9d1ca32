#include "ces/feeder/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ces/common/error.hpp"
#include "common/json_util.hpp"

namespace ces::feeder {

using nlohmann::json;
using detail::integer;
using detail::number;
using detail::require_keys;

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::kSubstationGen: return "substation-gen";
    case BusKind::kCrowdsourcee: return "crowdsourcee";
    case BusKind::kLoad: return "load";
  }
  return "load";
}

std::string_view to_string(CtClass ct) { return ct == CtClass::kCt1 ? "CT1" : "CT2"; }

BusKind parse_bus_kind(std::string_view text) {
  if (text == "substation-gen") return BusKind::kSubstationGen;
  if (text == "crowdsourcee") return BusKind::kCrowdsourcee;
  if (text == "load") return BusKind::kLoad;
  throw Error(ErrorCode::kMalformedDocument, "unknown bus kind '" + std::string(text) + "'");
}

CtClass parse_ct_class(std::string_view text) {
  if (text == "CT1") return CtClass::kCt1;
  if (text == "CT2") return CtClass::kCt2;
  throw Error(ErrorCode::kMalformedDocument, "unknown crowdsourcee class '" + std::string(text) + "'");
}

const Bus& Feeder::bus(int id) const {
  if (!has_bus(id)) throw Error(ErrorCode::kUnknownBus, "unknown bus " + std::to_string(id));
  return buses[static_cast<std::size_t>(id - 1)];
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : up_(n) { std::iota(up_.begin(), up_.end(), 0); }
  std::size_t find(std::size_t a) {
    while (up_[a] != a) a = up_[a] = up_[up_[a]];
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    up_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> up_;
};

}  // namespace

void validate(const Feeder& f) {
  if (!(f.base_mva > 0.0) || !(f.base_kv > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "feeder bases must be positive");
  }
  if (!(f.v_min > 0.0) || f.v_min > f.v_max) {
    throw Error(ErrorCode::kInvalidArgument, "feeder voltage bounds must satisfy 0 < v_min <= v_max");
  }
  const std::size_t n = f.buses.size();
  if (n == 0) throw Error(ErrorCode::kMissingSubstation, "feeder has no buses");
  std::set<int> ids;
  for (const auto& b : f.buses) {
    if (!ids.insert(b.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate bus id " + std::to_string(b.id));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (f.buses[i].id != static_cast<int>(i + 1)) {
      throw Error(ErrorCode::kMalformedDocument, "bus ids must form 1..n in order");
    }
  }
  if (f.buses[0].kind != BusKind::kSubstationGen) {
    throw Error(ErrorCode::kMissingSubstation, "bus 1 must be the substation");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (f.buses[i].kind == BusKind::kSubstationGen) {
      throw Error(ErrorCode::kMalformedDocument, "only bus 1 may be a substation");
    }
  }
  if (f.lines.size() != n - 1) {
    throw Error(ErrorCode::kNonRadial, "a radial feeder with " + std::to_string(n) +
                                           " buses needs " + std::to_string(n - 1) + " lines");
  }
  DisjointSets sets(n + 1);
  std::vector<int> parent(n + 1, 0);
  for (const auto& l : f.lines) {
    if (!f.has_bus(l.child) || !f.has_bus(l.parent)) {
      throw Error(ErrorCode::kUnknownBus, "line references an unknown bus");
    }
    if (!(l.r >= 0.0) || !(l.x >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "line impedance must be nonnegative");
    }
    if (l.s_max && !(*l.s_max > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "line s_max must be positive");
    }
    if (l.child == 1) throw Error(ErrorCode::kNonRadial, "the substation cannot be a line child");
    if (parent[static_cast<std::size_t>(l.child)] != 0) {
      throw Error(ErrorCode::kNonRadial, "bus " + std::to_string(l.child) + " has two parents");
    }
    parent[static_cast<std::size_t>(l.child)] = l.parent;
    if (!sets.unite(static_cast<std::size_t>(l.child), static_cast<std::size_t>(l.parent))) {
      throw Error(ErrorCode::kNonRadial, "lines contain a cycle");
    }
  }
  // n-1 acyclic edges on n vertices span; with unique parents this is a tree rooted at 1.
}

Topology topology(const Feeder& f) {
  const std::size_t n = f.num_buses();
  Topology t;
  t.parent.assign(n + 1, 0);
  t.children.assign(n + 1, {});
  t.line_of.assign(n + 1, -1);
  for (std::size_t k = 0; k < f.lines.size(); ++k) {
    const auto& l = f.lines[k];
    t.parent[static_cast<std::size_t>(l.child)] = l.parent;
    t.children[static_cast<std::size_t>(l.parent)].push_back(l.child);
    t.line_of[static_cast<std::size_t>(l.child)] = static_cast<int>(k);
  }
  for (auto& c : t.children) std::sort(c.begin(), c.end());
  t.bfs_order.reserve(n);
  t.bfs_order.push_back(1);
  for (std::size_t head = 0; head < t.bfs_order.size(); ++head) {
    for (int c : t.children[static_cast<std::size_t>(t.bfs_order[head])]) t.bfs_order.push_back(c);
  }
  return t;
}

Feeder parse_feeder(const json& doc) {
  require_keys(doc, {"base_mva", "base_kv", "v_min", "v_max", "buses", "lines"}, {}, "feeder");
  Feeder f;
  f.base_mva = number(doc["base_mva"], "base_mva");
  f.base_kv = number(doc["base_kv"], "base_kv");
  f.v_min = number(doc["v_min"], "v_min");
  f.v_max = number(doc["v_max"], "v_max");
  if (!doc["buses"].is_array() || !doc["lines"].is_array()) {
    throw Error(ErrorCode::kMalformedDocument, "buses and lines must be arrays");
  }
  std::set<int> seen;
  for (const auto& b : doc["buses"]) {
    require_keys(b, {"id", "kind"}, {}, "bus");
    Bus bus;
    bus.id = integer(b["id"], "bus id");
    if (!b["kind"].is_string()) throw Error(ErrorCode::kMalformedDocument, "bus kind must be a string");
    bus.kind = parse_bus_kind(b["kind"].get<std::string>());
    if (!seen.insert(bus.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate bus id " + std::to_string(bus.id));
    }
    f.buses.push_back(bus);
  }
  std::sort(f.buses.begin(), f.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
  bool has_root = std::any_of(f.buses.begin(), f.buses.end(),
                              [](const Bus& b) { return b.kind == BusKind::kSubstationGen; });
  if (!has_root) throw Error(ErrorCode::kMissingSubstation, "feeder has no substation bus");
  for (const auto& l : doc["lines"]) {
    require_keys(l, {"child", "parent", "r", "x"}, {"s_max"}, "line");
    Line line;
    line.child = integer(l["child"], "line child");
    line.parent = integer(l["parent"], "line parent");
    line.r = number(l["r"], "line r");
    line.x = number(l["x"], "line x");
    if (l.contains("s_max")) line.s_max = number(l["s_max"], "line s_max");
    f.lines.push_back(line);
  }
  validate(f);
  return f;
}

Feeder parse_feeder_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedDocument, std::string("feeder document: ") + e.what());
  }
  return parse_feeder(doc);
}

Feeder load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder_text(ss.str());
}

json to_json(const Feeder& f) {
  json buses = json::array();
  for (const auto& b : f.buses) buses.push_back({{"id", b.id}, {"kind", to_string(b.kind)}});
  json lines = json::array();
  for (const auto& l : f.lines) {
    json j = {{"child", l.child}, {"parent", l.parent}, {"r", l.r}, {"x", l.x}};
    if (l.s_max) j["s_max"] = *l.s_max;
    lines.push_back(j);
  }
  return {{"base_mva", f.base_mva}, {"base_kv", f.base_kv}, {"v_min", f.v_min},
          {"v_max", f.v_max}, {"buses", buses}, {"lines", lines}};
}

Feeder builtin_feeder(std::string_view name) {
  if (name == "sce56") return parse_feeder_text(bundled_document("sce56.feeder.json"));
  if (name == "two-bus") return parse_feeder_text(bundled_document("two_bus.feeder.json"));
  throw Error(ErrorCode::kNotFound, "no bundled feeder named '" + std::string(name) + "'");
}

Unit parse_unit(std::string_view text) {
  if (text == "MW") return Unit::kMW;
  if (text == "MVAr" || text == "MVAR") return Unit::kMVAr;
  if (text == "MVA") return Unit::kMVA;
  if (text == "MWh") return Unit::kMWh;
  if (text == "kV") return Unit::kKV;
  if (text == "ohm") return Unit::kOhm;
  throw Error(ErrorCode::kUnknownUnit, "unknown unit '" + std::string(text) + "'");
}

std::string_view to_string(Unit unit) {
  switch (unit) {
    case Unit::kMW: return "MW";
    case Unit::kMVAr: return "MVAr";
    case Unit::kMVA: return "MVA";
    case Unit::kMWh: return "MWh";
    case Unit::kKV: return "kV";
    case Unit::kOhm: return "ohm";
  }
  return "?";
}

namespace {

double base_of(const Feeder& f, Unit unit) {
  if (!(f.base_mva > 0.0) || !(f.base_kv > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "feeder bases must be positive");
  }
  switch (unit) {
    case Unit::kMW:
    case Unit::kMVAr:
    case Unit::kMVA:
    case Unit::kMWh: return f.base_mva;
    case Unit::kKV: return f.base_kv;
    case Unit::kOhm: return f.base_kv * f.base_kv / f.base_mva;
  }
  throw Error(ErrorCode::kUnknownUnit, "unknown unit");
}

}  // namespace

double to_per_unit(const Feeder& f, double value, Unit unit) { return value / base_of(f, unit); }
double from_per_unit(const Feeder& f, double value, Unit unit) { return value * base_of(f, unit); }

}  // namespace ces::feeder
