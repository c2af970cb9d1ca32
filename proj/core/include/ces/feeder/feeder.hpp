#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ces::feeder {

enum class BusKind { kSubstationGen, kCrowdsourcee, kLoad };
enum class CtClass { kCt1, kCt2 };

std::string_view to_string(BusKind kind);
std::string_view to_string(CtClass ct);
BusKind parse_bus_kind(std::string_view text);
CtClass parse_ct_class(std::string_view text);

struct Bus {
  int id = 0;
  BusKind kind = BusKind::kLoad;
  std::optional<CtClass> ct_class;
};

// Flow on a line is measured from child toward parent.
struct Line {
  int child = 0;
  int parent = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
  std::optional<double> s_max;  // p.u.
};

// Indexed by bus id; slot 0 is unused. The root (bus 1) has parent 0.
struct Topology {
  std::vector<int> parent;
  std::vector<std::vector<int>> children;
  std::vector<int> line_of;   // index into Feeder::lines of the line whose child is the bus, -1 for root
  std::vector<int> bfs_order; // root first
};

struct Feeder {
  std::vector<Bus> buses;  // sorted by id, ids 1..n
  std::vector<Line> lines;
  double base_mva = 1.0;
  double base_kv = 12.0;
  double v_min = 0.9025;  // squared magnitude
  double v_max = 1.1025;

  std::size_t num_buses() const { return buses.size(); }
  const Bus& bus(int id) const;
  bool has_bus(int id) const { return id >= 1 && static_cast<std::size_t>(id) <= buses.size(); }
};

// Full structural validation: ids, substation, radiality, line orientation,
// numeric ranges. Throws Error.
void validate(const Feeder& feeder);

Feeder parse_feeder(const nlohmann::json& doc);
Feeder parse_feeder_text(std::string_view text);
Feeder load_feeder(const std::filesystem::path& path);
nlohmann::json to_json(const Feeder& feeder);

Topology topology(const Feeder& feeder);

// Bundled feeders: "sce56" and "two-bus".
Feeder builtin_feeder(std::string_view name);
// Raw text of a bundled data document, e.g. "sce56.feeder.json".
std::string_view bundled_document(std::string_view name);

enum class Unit { kMW, kMVAr, kMVA, kMWh, kKV, kOhm };

Unit parse_unit(std::string_view text);
std::string_view to_string(Unit unit);

// Energy is normalized by base_mva times one hour.
double to_per_unit(const Feeder& feeder, double value, Unit unit);
double from_per_unit(const Feeder& feeder, double value, Unit unit);

}  // namespace ces::feeder
