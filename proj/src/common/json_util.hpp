#pragma once

#include <string>

#include <json.hpp>

#include "equiflex/error.hpp"

namespace equiflex::detail {

template <class T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T optional(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return required<T>(j, key, where);
}

nlohmann::json parse_json(const std::string& text, const std::string& what);
std::string read_file(const std::string& path, const std::string& what);

}  // namespace equiflex::detail
