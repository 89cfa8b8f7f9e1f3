#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "equiflex/error.hpp"

namespace equiflex::app {

namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path, const std::string& what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + what + " file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) throw ValidationError(what + ": '" + s + "' is not a number");
  return v;
}

std::uint64_t parse_seed(const std::string& s) {
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || p != end) throw ValidationError("seed '" + s + "' is not a nonnegative integer");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(text);
  while (std::getline(ss, cur, sep)) parts.push_back(cur);
  return parts;
}

template <class T>
void take(const json& j, const char* key, std::optional<T>& slot) {
  if (j.contains(key) && !j.at(key).is_null()) slot = j.at(key).get<T>();
}

template <class T>
void fill(std::optional<T>& mine, const std::optional<T>& theirs) {
  if (!mine) mine = theirs;
}

stage2::Disturbance disturbance_from_json(const std::string& text, const grid::NetworkCase& net) {
  json d;
  try {
    d = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("disturbance file: ") + e.what());
  }
  if (!d.is_object() || !d.contains("periods")) throw ParseError("disturbance file: missing key 'periods'");
  const auto periods = d.at("periods").get<std::vector<std::size_t>>();
  auto out = stage2::zero_disturbance(net, periods);
  for (const auto& row : d.value("delta_kw", json::array())) {
    const int bus = row.at("bus").get<int>();
    const auto values = row.at("values").get<std::vector<double>>();
    if (values.size() != periods.size()) {
      throw ParseError("disturbance file: bus " + std::to_string(bus) + " lists " + std::to_string(values.size()) +
                       " values for " + std::to_string(periods.size()) + " intervals");
    }
    const std::size_t b = net.bus_index(bus);
    for (std::size_t k = 0; k < periods.size(); ++k) {
      if (periods[k] >= net.horizon) throw ValidationError("disturbance interval outside the horizon");
      out.delta_kw[b][periods[k]] = values[k];
    }
  }
  return out;
}

// One actor per load bus at the default income tiers, for portfolios that
// come without an actor table.
stage1::ActorTable default_actors(const grid::NetworkCase& net, const scenario::IncomeTierMap& tiers) {
  scenario::PenetrationConfig c;
  c.dg_bess_fraction = c.flexible_load_fraction = c.ev_actor_fraction = c.pv_fraction = 0.0;
  c.substation_fraction = 0.0;
  return scenario::synthesize_portfolio(net, c, tiers).actors;
}

}  // namespace

void RunConfig::merge_defaults_from(const RunConfig& f) {
  fill(scenario, f.scenario);
  fill(case_source, f.case_source);
  fill(portfolio_source, f.portfolio_source);
  fill(prices, f.prices);
  fill(actors, f.actors);
  fill(disturbance, f.disturbance);
  fill(w, f.w);
  fill(seed, f.seed);
  fill(equity_mode, f.equity_mode);
  fill(fairness, f.fairness);
  fill(pair_scale, f.pair_scale);
  fill(relax_binaries, f.relax_binaries);
  fill(no_flex, f.no_flex);
  fill(serial, f.serial);
  fill(multi_actor, f.multi_actor);
  fill(abs_gap, f.abs_gap);
  fill(rel_gap, f.rel_gap);
  fill(feasibility, f.feasibility);
  fill(node_limit, f.node_limit);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path, "config"));
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("config " + path.string() + ": expected a JSON object");
  static const char* const known[] = {"scenario",    "case",           "portfolio", "prices",   "actors",
                                      "disturbance", "w",              "seed",      "equity-mode", "fairness",
                                      "pair-scale",  "relax-binaries", "no-flex",   "serial",   "multi-actor",
                                      "abs-gap",     "rel-gap",        "feasibility", "node-limit", "out"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ParseError("config " + path.string() + ": unknown key '" + key + "'");
    }
  }
  RunConfig c;
  try {
    take(j, "scenario", c.scenario);
    take(j, "case", c.case_source);
    take(j, "portfolio", c.portfolio_source);
    take(j, "prices", c.prices);
    take(j, "actors", c.actors);
    take(j, "disturbance", c.disturbance);
    if (j.contains("w")) {
      c.w = j.at("w").is_array() ? j.at("w").get<std::vector<double>>() : std::vector<double>{j.at("w").get<double>()};
    }
    take(j, "seed", c.seed);
    take(j, "equity-mode", c.equity_mode);
    take(j, "fairness", c.fairness);
    take(j, "pair-scale", c.pair_scale);
    take(j, "relax-binaries", c.relax_binaries);
    take(j, "no-flex", c.no_flex);
    take(j, "serial", c.serial);
    take(j, "multi-actor", c.multi_actor);
    take(j, "abs-gap", c.abs_gap);
    take(j, "rel-gap", c.rel_gap);
    take(j, "feasibility", c.feasibility);
    take(j, "node-limit", c.node_limit);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return c;
}

std::vector<double> parse_weight_list(const std::string& text) {
  std::vector<double> w;
  for (const auto& part : split(text, ',')) {
    const double v = parse_number(part, "--w");
    if (v < 0.0) throw ValidationError("fairness weight w must be >= 0, got " + part);
    w.push_back(v);
  }
  if (w.empty()) throw ValidationError("--w needs at least one value");
  return w;
}

std::vector<double> load_prices(const std::filesystem::path& path) {
  const auto text = read_text(path, "price");
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<double> out;
  if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
    try {
      const auto j = json::parse(text);
      out = (j.is_object() ? j.at("ug_price") : j).get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ParseError("price file " + path.string() + ": " + e.what());
    }
  } else {
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) out.push_back(parse_number(cur, "price file " + path.string()));
      cur.clear();
    };
    for (char ch : text) {
      if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
        flush();
      } else {
        cur += ch;
      }
    }
    flush();
  }
  if (out.empty()) throw ParseError("price file " + path.string() + " holds no values");
  return out;
}

DisturbanceSpec parse_disturbance_spec(const std::string& text) {
  DisturbanceSpec d;
  const auto at = text.find('@');
  const std::string mag = text.substr(0, at);
  double v = 0.0;
  const char* end = mag.data() + mag.size();
  auto [p, ec] = std::from_chars(mag.data(), end, v);
  if (ec != std::errc() || p != end || mag.empty()) {
    if (at != std::string::npos) throw ValidationError("disturbance '" + text + "': expected MAG[@T,...]");
    d.file = text;
    return d;
  }
  if (!std::isfinite(v) || v < -1.0) throw ValidationError("disturbance magnitude must be >= -1");
  d.magnitude = v;
  if (at != std::string::npos) {
    for (const auto& part : split(text.substr(at + 1), ',')) d.periods.push_back(parse_seed(part));
    if (d.periods.empty()) throw ValidationError("disturbance '" + text + "' lists no interval");
    std::sort(d.periods.begin(), d.periods.end());
    d.periods.erase(std::unique(d.periods.begin(), d.periods.end()), d.periods.end());
  }
  return d;
}

scenario::ScenarioFile build_scenario(const RunConfig& cfg) {
  scenario::ScenarioFile s;
  const std::uint64_t seed = cfg.seed.value_or(1);
  if (cfg.scenario) {
    if (cfg.case_source || cfg.portfolio_source || cfg.prices || cfg.actors) {
      throw ValidationError("a replayed scenario already fixes the case, portfolio, prices and actors");
    }
    s = scenario::load_scenario(*cfg.scenario);
  } else {
    const std::string case_src = cfg.case_source.value_or("builtin:ieee33");
    const auto net = case_src == "builtin:ieee33" ? grid::builtin_ieee33() : grid::load_case(case_src);
    grid::validate_case(net);
    const auto tiers = scenario::assign_income_tiers(net);
    const std::string port = cfg.portfolio_source.value_or("synth:" + std::to_string(seed));
    if (port.rfind("synth:", 0) == 0) {
      scenario::PenetrationConfig pc;
      pc.seed = parse_seed(port.substr(6));
      pc.multi_actor = cfg.multi_actor.value_or(false);
      auto syn = scenario::synthesize_portfolio(net, pc, tiers);
      s.network = std::move(syn.network);
      s.portfolio = std::move(syn.portfolio);
      s.actors = std::move(syn.actors);
      s.synthesis = pc;
    } else {
      s.network = net;
      s.portfolio = ders::load_portfolio(port);
      s.actors = default_actors(net, tiers);
    }
    if (cfg.actors) s.actors = stage1::parse_actors(read_text(*cfg.actors, "actor"));
    s.case_source = case_src;
    s.portfolio_source = port;
    s.notices = tiers.notices;
    s.ug_price = cfg.prices ? load_prices(*cfg.prices) : scenario::default_ug_price();
    s.disturbance_seed = seed;
    s.disturbance_magnitude = scenario::defaults::kDisturbanceMagnitude;
    const std::size_t t = std::min<std::size_t>(scenario::defaults::kDisturbanceInterval, s.network.horizon - 1);
    s.disturbance = scenario::gen_disturbance(s.network, s.disturbance_magnitude, seed, {t});
  }

  if (cfg.disturbance) {
    const auto spec = parse_disturbance_spec(*cfg.disturbance);
    if (spec.file) {
      s.disturbance = disturbance_from_json(read_text(*spec.file, "disturbance"), s.network);
      s.disturbance_magnitude = 0.0;
      for (std::size_t k : s.disturbance.periods) {
        double d = 0.0;
        for (const auto& row : s.disturbance.delta_kw) d += row[k];
        const double total = s.network.total_load_kw(k);
        if (total > 0.0) s.disturbance_magnitude = std::max(s.disturbance_magnitude, d / total);
      }
    } else {
      auto periods = spec.periods;
      if (periods.empty()) {
        periods = s.disturbance.periods.empty()
                      ? std::vector<std::size_t>{std::min<std::size_t>(scenario::defaults::kDisturbanceInterval,
                                                                       s.network.horizon - 1)}
                      : s.disturbance.periods;
      }
      if (cfg.seed) s.disturbance_seed = *cfg.seed;
      s.disturbance_magnitude = spec.magnitude;
      s.disturbance = scenario::gen_disturbance(s.network, spec.magnitude, s.disturbance_seed, periods);
    }
  }
  if (cfg.w) s.w = cfg.w->front();
  if (cfg.equity_mode) s.equity_mode = stage1::equity_mode_from_string(*cfg.equity_mode);
  if (cfg.fairness) s.fairness = stage2::fairness_mode_from_string(*cfg.fairness);
  if (cfg.pair_scale) s.pair_scale = stage2::pair_scale_from_string(*cfg.pair_scale);
  if (cfg.relax_binaries) s.relax_binaries = *cfg.relax_binaries;
  scenario::validate_scenario(s);
  return s;
}

SolveSettings solve_settings(const RunConfig& cfg, const scenario::ScenarioFile& s) {
  SolveSettings out;
  auto tune = [&](conic::Tolerances& t) {
    if (cfg.abs_gap) t.abs_gap = *cfg.abs_gap;
    if (cfg.rel_gap) t.rel_gap = *cfg.rel_gap;
    if (cfg.feasibility) t.feasibility = *cfg.feasibility;
  };
  auto bnb = [&](conic::BnbOptions& b) {
    b.parallel = !cfg.serial.value_or(false);
    if (cfg.node_limit) b.node_limit = *cfg.node_limit;
  };
  tune(out.clear.tol);
  bnb(out.clear.bnb);
  out.clear.relax_binaries = s.relax_binaries;
  tune(out.flex.tol);
  bnb(out.flex.bnb);
  out.flex.relax_binaries = s.relax_binaries;
  out.flex.w = s.w;
  out.flex.mode = s.fairness;
  out.flex.pair_scale = s.pair_scale;
  return out;
}

}  // namespace equiflex::app
