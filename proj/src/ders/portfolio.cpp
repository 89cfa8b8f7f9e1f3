#include "equiflex/ders/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "../common/json_util.hpp"
#include "equiflex/error.hpp"

namespace equiflex::ders {

using nlohmann::json;
using detail::optional;
using detail::required;

std::vector<std::string> DerPortfolio::owners() const {
  std::set<std::string> s;
  for (const auto& u : pv) s.insert(u.owner);
  for (const auto& u : dg) s.insert(u.owner);
  for (const auto& u : bess) s.insert(u.owner);
  for (const auto& u : ev) s.insert(u.owner);
  for (const auto& u : flexload) s.insert(u.owner);
  return {s.begin(), s.end()};
}

namespace {

void check(bool ok, const std::string& unit, const std::string& what) {
  if (!ok) throw ValidationError(unit + ": " + what);
}

void check_profile(const std::vector<double>& v, std::size_t horizon, const std::string& unit,
                   const std::string& field) {
  check(v.size() == horizon, unit,
        field + " has " + std::to_string(v.size()) + " values, horizon is " + std::to_string(horizon));
}

void check_storage(const StorageUnit& s, const std::string& name) {
  check(s.p_ch_max_kw >= 0.0 && s.p_dch_max_kw >= 0.0, name, "power limits must be >= 0");
  check(s.eff_ch > 0.0 && s.eff_ch <= 1.0, name, "eff_ch must lie in (0, 1]");
  check(s.eff_dch > 0.0 && s.eff_dch <= 1.0, name, "eff_dch must lie in (0, 1]");
  check(s.soc_min_kwh >= 0.0, name, "soc_min_kwh must be >= 0");
  check(s.soc_min_kwh <= s.soc_max_kwh, name, "soc_min_kwh exceeds soc_max_kwh");
  check(s.soc_max_kwh <= s.capacity_kwh, name, "soc_max_kwh exceeds capacity_kwh");
  check(s.cost_per_kwh >= 0.0, name, "cost must be >= 0");
}

}  // namespace

void validate_portfolio(const DerPortfolio& p, std::size_t horizon, double dt) {
  std::set<std::string> ids;
  auto unique = [&](const std::string& id, const char* kind) {
    const std::string name = std::string(kind) + " '" + id + "'";
    check(!id.empty(), kind, "unit id must not be empty");
    check(ids.insert(id).second, name, "duplicate unit id");
    return name;
  };
  for (const auto& u : p.pv) {
    const auto name = unique(u.id, "pv");
    check(u.capacity_kva > 0.0, name, "capacity_kva must be positive");
    check_profile(u.forecast_kw, horizon, name, "forecast_kw");
    check_profile(u.power_factor_limit, horizon, name, "power_factor_limit");
    for (double f : u.forecast_kw) check(f >= 0.0, name, "forecast must be >= 0");
    for (double f : u.power_factor_limit) check(f > 0.0 && f <= 1.0, name, "power factor must lie in (0, 1]");
  }
  for (const auto& u : p.dg) {
    const auto name = unique(u.id, "dg");
    check(u.p_min_kw >= 0.0 && u.p_min_kw <= u.p_max_kw, name, "need 0 <= p_min <= p_max");
    check(u.ramp_up_kw_per_h > 0.0 && u.ramp_down_kw_per_h > 0.0, name, "ramp rates must be positive");
    check(u.cost_per_kwh >= 0.0, name, "cost must be >= 0");
    const double p0 = u.initial_output();
    check(p0 >= u.p_min_kw - 1e-12 && p0 <= u.p_max_kw + 1e-12, name, "initial output outside [p_min, p_max]");
  }
  for (const auto& u : p.bess) {
    const auto name = unique(u.id, "bess");
    check_storage(u, name);
    check(u.soc_min_kwh <= u.energy_init_kwh && u.energy_init_kwh <= u.soc_max_kwh, name,
          "energy_init_kwh must lie in [soc_min, soc_max]");
  }
  for (const auto& u : p.ev) {
    const auto name = unique(u.id, "ev");
    check_storage(u, name);
    check(u.arrival < u.departure, name, "arrival must precede departure");
    check(u.departure < horizon, name, "departure outside the horizon");
    check(u.soc_min_kwh <= u.energy_init_kwh && u.energy_init_kwh <= u.soc_max_kwh, name,
          "arrival state of charge must lie in [soc_min, soc_max]");
    check(u.trip_energy_kwh <= u.soc_max_kwh, name,
          "trip energy " + std::to_string(u.trip_energy_kwh) + " kWh exceeds soc_max " +
              std::to_string(u.soc_max_kwh) + " kWh");
    const double slots = double(u.departure - u.arrival + 1);
    const double reach = u.energy_init_kwh + u.eff_ch * u.p_ch_max_kw * dt * slots;
    check(reach >= u.trip_energy_kwh, name,
          "trip energy unreachable: at most " + std::to_string(reach) + " kWh by departure");
  }
  for (const auto& u : p.flexload) {
    const auto name = unique(u.id, "flexload");
    check_profile(u.p_max_kw, horizon, name, "p_max_kw");
    for (double v : u.p_max_kw) check(v >= 0.0, name, "p_max_kw must be >= 0");
    check(u.cost_per_kwh >= 0.0, name, "cost must be >= 0");
  }
}

namespace {

json storage_json(const StorageUnit& s) {
  return {{"id", s.id},
          {"bus", s.bus},
          {"owner", s.owner},
          {"p_ch_max_kw", s.p_ch_max_kw},
          {"p_dch_max_kw", s.p_dch_max_kw},
          {"eff_ch", s.eff_ch},
          {"eff_dch", s.eff_dch},
          {"energy_init_kwh", s.energy_init_kwh},
          {"capacity_kwh", s.capacity_kwh},
          {"soc_min_kwh", s.soc_min_kwh},
          {"soc_max_kwh", s.soc_max_kwh},
          {"cost_per_kwh", s.cost_per_kwh}};
}

void read_storage(const json& j, StorageUnit& s, const std::string& where) {
  s.id = required<std::string>(j, "id", where);
  s.bus = required<int>(j, "bus", where);
  s.owner = optional<std::string>(j, "owner", "", where);
  s.p_ch_max_kw = required<double>(j, "p_ch_max_kw", where);
  s.p_dch_max_kw = required<double>(j, "p_dch_max_kw", where);
  s.eff_ch = required<double>(j, "eff_ch", where);
  s.eff_dch = required<double>(j, "eff_dch", where);
  s.energy_init_kwh = required<double>(j, "energy_init_kwh", where);
  s.capacity_kwh = required<double>(j, "capacity_kwh", where);
  s.soc_min_kwh = optional<double>(j, "soc_min_kwh", 0.0, where);
  s.soc_max_kwh = optional<double>(j, "soc_max_kwh", s.capacity_kwh, where);
  s.cost_per_kwh = optional<double>(j, "cost_per_kwh", 0.0, where);
}

const json& array_or_empty(const json& doc, const char* key) {
  static const json empty = json::array();
  if (!doc.contains(key)) return empty;
  if (!doc[key].is_array()) throw ParseError(std::string("portfolio: '") + key + "' must be an array");
  return doc[key];
}

}  // namespace

DerPortfolio parse_portfolio(const std::string& text) {
  const json doc = detail::parse_json(text, "portfolio");
  if (!doc.is_object()) throw ParseError("portfolio: top level must be an object");
  DerPortfolio p;
  const json& pv = array_or_empty(doc, "pv");
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const std::string where = "pv[" + std::to_string(i) + "]";
    PvUnit u;
    u.id = required<std::string>(pv[i], "id", where);
    u.bus = required<int>(pv[i], "bus", where);
    u.owner = optional<std::string>(pv[i], "owner", "", where);
    u.capacity_kva = required<double>(pv[i], "capacity_kva", where);
    u.forecast_kw = required<std::vector<double>>(pv[i], "forecast_kw", where);
    u.power_factor_limit = optional<std::vector<double>>(
        pv[i], "power_factor_limit", std::vector<double>(u.forecast_kw.size(), 1.0), where);
    p.pv.push_back(std::move(u));
  }
  const json& dg = array_or_empty(doc, "dg");
  for (std::size_t i = 0; i < dg.size(); ++i) {
    const std::string where = "dg[" + std::to_string(i) + "]";
    DgUnit u;
    u.id = required<std::string>(dg[i], "id", where);
    u.bus = required<int>(dg[i], "bus", where);
    u.owner = optional<std::string>(dg[i], "owner", "", where);
    u.p_min_kw = required<double>(dg[i], "p_min_kw", where);
    u.p_max_kw = required<double>(dg[i], "p_max_kw", where);
    u.ramp_up_kw_per_h = required<double>(dg[i], "ramp_up_kw_per_h", where);
    u.ramp_down_kw_per_h = required<double>(dg[i], "ramp_down_kw_per_h", where);
    u.cost_per_kwh = required<double>(dg[i], "cost_per_kwh", where);
    u.initial_output_kw = optional<double>(dg[i], "initial_output_kw", -1.0, where);
    p.dg.push_back(std::move(u));
  }
  const json& bess = array_or_empty(doc, "bess");
  for (std::size_t i = 0; i < bess.size(); ++i) {
    StorageUnit u;
    read_storage(bess[i], u, "bess[" + std::to_string(i) + "]");
    p.bess.push_back(std::move(u));
  }
  const json& ev = array_or_empty(doc, "ev");
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const std::string where = "ev[" + std::to_string(i) + "]";
    EvUnit u;
    read_storage(ev[i], u, where);
    u.arrival = required<std::size_t>(ev[i], "arrival", where);
    u.departure = required<std::size_t>(ev[i], "departure", where);
    u.trip_energy_kwh = required<double>(ev[i], "trip_energy_kwh", where);
    p.ev.push_back(std::move(u));
  }
  const json& fl = array_or_empty(doc, "flexload");
  for (std::size_t i = 0; i < fl.size(); ++i) {
    const std::string where = "flexload[" + std::to_string(i) + "]";
    FlexLoad u;
    u.id = required<std::string>(fl[i], "id", where);
    u.bus = required<int>(fl[i], "bus", where);
    u.owner = optional<std::string>(fl[i], "owner", "", where);
    u.p_max_kw = required<std::vector<double>>(fl[i], "p_max_kw", where);
    u.cost_per_kwh = required<double>(fl[i], "cost_per_kwh", where);
    p.flexload.push_back(std::move(u));
  }
  return p;
}

DerPortfolio load_portfolio(const std::filesystem::path& path) {
  return parse_portfolio(detail::read_file(path.string(), "portfolio file"));
}

std::string dump_portfolio(const DerPortfolio& p) {
  json doc;
  doc["pv"] = json::array();
  for (const auto& u : p.pv) {
    doc["pv"].push_back({{"id", u.id},
                         {"bus", u.bus},
                         {"owner", u.owner},
                         {"capacity_kva", u.capacity_kva},
                         {"forecast_kw", u.forecast_kw},
                         {"power_factor_limit", u.power_factor_limit}});
  }
  doc["dg"] = json::array();
  for (const auto& u : p.dg) {
    json j = {{"id", u.id},
              {"bus", u.bus},
              {"owner", u.owner},
              {"p_min_kw", u.p_min_kw},
              {"p_max_kw", u.p_max_kw},
              {"ramp_up_kw_per_h", u.ramp_up_kw_per_h},
              {"ramp_down_kw_per_h", u.ramp_down_kw_per_h},
              {"cost_per_kwh", u.cost_per_kwh}};
    if (u.initial_output_kw >= 0.0) j["initial_output_kw"] = u.initial_output_kw;
    doc["dg"].push_back(std::move(j));
  }
  doc["bess"] = json::array();
  for (const auto& u : p.bess) doc["bess"].push_back(storage_json(u));
  doc["ev"] = json::array();
  for (const auto& u : p.ev) {
    json j = storage_json(u);
    j["arrival"] = u.arrival;
    j["departure"] = u.departure;
    j["trip_energy_kwh"] = u.trip_energy_kwh;
    doc["ev"].push_back(std::move(j));
  }
  doc["flexload"] = json::array();
  for (const auto& u : p.flexload) {
    doc["flexload"].push_back(
        {{"id", u.id}, {"bus", u.bus}, {"owner", u.owner}, {"p_max_kw", u.p_max_kw}, {"cost_per_kwh", u.cost_per_kwh}});
  }
  return doc.dump(1) + "\n";
}

}  // namespace equiflex::ders
