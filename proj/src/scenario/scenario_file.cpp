#include "equiflex/scenario/scenario_file.hpp"

#include <fstream>
#include <sstream>

#include "../common/json_util.hpp"

namespace equiflex::scenario {

namespace {

using ojson = nlohmann::ordered_json;

// Indent every line after the first so a nested dump lines up.
std::string nest(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    out += text[i];
    if (text[i] == '\n' && i + 1 < text.size()) out += "  ";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

ojson config_json(const PenetrationConfig& c) {
  return ojson{{"dg_bess_fraction", c.dg_bess_fraction},
               {"flexible_load_fraction", c.flexible_load_fraction},
               {"ev_actor_fraction", c.ev_actor_fraction},
               {"pv_fraction", c.pv_fraction},
               {"substation_fraction", c.substation_fraction},
               {"seed", c.seed},
               {"multi_actor", c.multi_actor}};
}

PenetrationConfig parse_config(const nlohmann::json& j) {
  const std::string where = "scenario synthesis";
  PenetrationConfig c;
  c.dg_bess_fraction = detail::required<double>(j, "dg_bess_fraction", where);
  c.flexible_load_fraction = detail::required<double>(j, "flexible_load_fraction", where);
  c.ev_actor_fraction = detail::required<double>(j, "ev_actor_fraction", where);
  c.pv_fraction = detail::required<double>(j, "pv_fraction", where);
  c.substation_fraction = detail::required<double>(j, "substation_fraction", where);
  c.seed = detail::required<std::uint64_t>(j, "seed", where);
  c.multi_actor = detail::optional<bool>(j, "multi_actor", false, where);
  return c;
}

}  // namespace

void validate_scenario(const ScenarioFile& s) {
  grid::validate_case(s.network);
  ders::validate_portfolio(s.portfolio, s.network.horizon, s.network.dt);
  stage1::validate_actors(s.actors, s.network, s.portfolio);
  if (s.ug_price.size() != s.network.horizon) {
    throw ValidationError("upstream price has " + std::to_string(s.ug_price.size()) + " values for a horizon of " +
                          std::to_string(s.network.horizon));
  }
  for (double p : s.ug_price) {
    if (!std::isfinite(p)) throw ValidationError("upstream price is not finite");
  }
  stage2::validate_disturbance(s.disturbance, s.network);
  if (!(s.w >= 0.0) || !std::isfinite(s.w)) throw ValidationError("fairness weight w must be finite and >= 0");
}

std::string dump_scenario(const ScenarioFile& s) {
  ojson head;
  head["defaults_version"] = s.defaults_version;
  head["case_source"] = s.case_source;
  head["portfolio_source"] = s.portfolio_source;
  if (s.synthesis) head["synthesis"] = config_json(*s.synthesis);
  head["notices"] = s.notices;
  head["ug_price"] = s.ug_price;
  ojson market;
  market["equity_mode"] = to_string(s.equity_mode);
  market["burden_mean"] = to_string(s.burden_mean);
  market["w"] = s.w;
  market["fairness"] = to_string(s.fairness);
  market["pair_scale"] = to_string(s.pair_scale);
  market["relax_binaries"] = s.relax_binaries;
  head["market"] = market;

  ojson dist;
  dist["magnitude"] = s.disturbance_magnitude;
  dist["seed"] = s.disturbance_seed;
  dist["periods"] = s.disturbance.periods;
  dist["delta_kw"] = ojson::array();
  for (std::size_t b = 0; b < s.network.buses.size() && b < s.disturbance.delta_kw.size(); ++b) {
    std::vector<double> row;
    for (std::size_t t : s.disturbance.periods) row.push_back(s.disturbance.delta_kw[b].at(t));
    dist["delta_kw"].push_back(ojson{{"bus", s.network.buses[b].id}, {"values", row}});
  }

  std::string out = "{\n";
  for (auto it = head.begin(); it != head.end(); ++it) {
    out += "  " + ojson(it.key()).dump() + ": " + it->dump() + ",\n";
  }
  out += "  \"disturbance\": {\n";
  for (auto it = dist.begin(); it != dist.end(); ++it) {
    if (it.key() == "delta_kw") continue;
    out += "    " + ojson(it.key()).dump() + ": " + it->dump() + ",\n";
  }
  out += "    \"delta_kw\": [\n";
  const auto& rows = dist["delta_kw"];
  for (std::size_t i = 0; i < rows.size(); ++i) out += "      " + rows[i].dump() + (i + 1 < rows.size() ? ",\n" : "\n");
  out += "    ]\n  },\n";
  out += "  \"network\": " + nest(grid::dump_case(s.network)) + ",\n";
  out += "  \"portfolio\": " + nest(ders::dump_portfolio(s.portfolio)) + ",\n";
  out += "  \"actors\": " + nest(stage1::dump_actors(s.actors)) + "\n";
  return out + "}\n";
}

ScenarioFile parse_scenario(const std::string& text) {
  const auto doc = detail::parse_json(text, "scenario");
  const std::string where = "scenario";
  ScenarioFile s;
  s.defaults_version = detail::required<int>(doc, "defaults_version", where);
  if (s.defaults_version > defaults::kDefaultsVersion) {
    throw ParseError("scenario was written with defaults version " + std::to_string(s.defaults_version) +
                     ", newer than this build (" + std::to_string(defaults::kDefaultsVersion) + ")");
  }
  s.case_source = detail::optional<std::string>(doc, "case_source", "", where);
  s.portfolio_source = detail::optional<std::string>(doc, "portfolio_source", "", where);
  if (doc.contains("synthesis") && !doc.at("synthesis").is_null()) s.synthesis = parse_config(doc.at("synthesis"));
  s.notices = detail::optional<std::vector<std::string>>(doc, "notices", {}, where);
  s.ug_price = detail::required<std::vector<double>>(doc, "ug_price", where);

  if (!doc.contains("network")) throw ParseError("scenario: missing key 'network'");
  s.network = grid::parse_case(doc.at("network").dump());
  s.portfolio = doc.contains("portfolio") ? ders::parse_portfolio(doc.at("portfolio").dump()) : ders::DerPortfolio{};
  if (!doc.contains("actors")) throw ParseError("scenario: missing key 'actors'");
  s.actors = stage1::parse_actors(doc.at("actors").dump());

  if (doc.contains("market")) {
    const auto& m = doc.at("market");
    const std::string mw = "scenario market";
    s.equity_mode = stage1::equity_mode_from_string(detail::optional<std::string>(m, "equity_mode", "relief", mw));
    s.burden_mean =
        stage1::network_mean_from_string(detail::optional<std::string>(m, "burden_mean", "load-weighted", mw));
    s.w = detail::optional<double>(m, "w", 1.0, mw);
    s.fairness = stage2::fairness_mode_from_string(detail::optional<std::string>(m, "fairness", "pairwise", mw));
    s.pair_scale = stage2::pair_scale_from_string(detail::optional<std::string>(m, "pair_scale", "sum", mw));
    s.relax_binaries = detail::optional<bool>(m, "relax_binaries", false, mw);
  }

  if (!doc.contains("disturbance")) throw ParseError("scenario: missing key 'disturbance'");
  const auto& d = doc.at("disturbance");
  const std::string dw = "scenario disturbance";
  s.disturbance_magnitude = detail::optional<double>(d, "magnitude", 0.0, dw);
  s.disturbance_seed = detail::optional<std::uint64_t>(d, "seed", 1, dw);
  auto periods = detail::required<std::vector<std::size_t>>(d, "periods", dw);
  s.disturbance = stage2::zero_disturbance(s.network, periods);
  if (d.contains("delta_kw")) {
    for (const auto& row : d.at("delta_kw")) {
      const int bus = detail::required<int>(row, "bus", dw);
      const auto values = detail::required<std::vector<double>>(row, "values", dw);
      if (values.size() != periods.size()) {
        throw ParseError(dw + ": bus " + std::to_string(bus) + " lists " + std::to_string(values.size()) +
                         " values for " + std::to_string(periods.size()) + " intervals");
      }
      const std::size_t b = s.network.bus_index(bus);
      for (std::size_t k = 0; k < periods.size(); ++k) {
        if (periods[k] >= s.network.horizon) throw ParseError(dw + ": interval outside the horizon");
        s.disturbance.delta_kw[b][periods[k]] = values[k];
      }
    }
  }
  return s;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
  return parse_scenario(detail::read_file(path.string(), "scenario"));
}

void save_scenario(const ScenarioFile& s, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << dump_scenario(s);
  if (!f) throw Error("failed writing " + path.string());
}

}  // namespace equiflex::scenario
