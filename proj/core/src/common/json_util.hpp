#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ces/common/error.hpp"

namespace ces::detail {

inline void require_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> required,
                         std::initializer_list<std::string_view> optional, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kMalformedDocument, where + " must be an object");
  for (auto key : required) {
    if (!obj.contains(std::string(key))) {
      throw Error(ErrorCode::kMalformedDocument, where + " is missing '" + std::string(key) + "'");
    }
  }
  for (const auto& item : obj.items()) {
    const auto& key = item.key();
    bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                 std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw Error(ErrorCode::kMalformedDocument, where + " has unknown field '" + key + "'");
  }
}

inline double number(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::kMalformedDocument, where + " must be a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::kMalformedDocument, where + " must be finite");
  return d;
}

inline int integer(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw Error(ErrorCode::kMalformedDocument, where + " must be an integer");
  return v.get<int>();
}

inline std::string string(const nlohmann::json& v, const std::string& where) {
  if (!v.is_string()) throw Error(ErrorCode::kMalformedDocument, where + " must be a string");
  return v.get<std::string>();
}

inline bool boolean(const nlohmann::json& v, const std::string& where) {
  if (!v.is_boolean()) throw Error(ErrorCode::kMalformedDocument, where + " must be a boolean");
  return v.get<bool>();
}

inline std::vector<double> numbers(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array()) throw Error(ErrorCode::kMalformedDocument, where + " must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(number(e, where));
  return out;
}

inline std::optional<double> opt_number(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return std::nullopt;
  return number(obj[key], where + "." + key);
}

}  // namespace ces::detail
