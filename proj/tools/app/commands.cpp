#include "commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include <spdlog/sinks/stdout_sinks.h>

#include "equiflex/stage1/dual_check.hpp"

namespace equiflex::app {

namespace fs = std::filesystem;

std::shared_ptr<spdlog::logger> logger() {
  static const auto log = [] {
    auto l = std::make_shared<spdlog::logger>("equiflex", std::make_shared<spdlog::sinks::stderr_sink_st>());
    l->set_pattern("equiflex: %l: %v");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("EQUIFLEX_LOG"); env && *env) {
      level = spdlog::level::from_str(env);
      // from_str maps unknown names to off; keep warnings in that case.
      if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::warn;
    }
    l->set_level(level);
    return l;
  }();
  return log;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void log_notices(const scenario::ScenarioFile& s) {
  for (const auto& n : s.notices) logger()->warn("{}", n);
}

// Rows of a CSV keyed by column name.
struct Rows {
  CsvTable t;
  explicit Rows(const fs::path& p) : t(read_csv(p)) {}
  [[nodiscard]] const std::string& at(std::size_t r, const std::string& col) const { return t.rows[r][t.column(col)]; }
  [[nodiscard]] double num(std::size_t r, const std::string& col) const {
    const auto& s = at(r, col);
    return s.empty() ? std::nan("") : std::stod(s);
  }
  [[nodiscard]] std::size_t size() const { return t.rows.size(); }
};

}  // namespace

Stage1Outputs solve_stage1(const scenario::ScenarioFile& s, const SolveSettings& settings) {
  const auto in = s.market_inputs();
  auto cm = stage1::clear_energy_market(in, settings.clear);
  if (!cm.proven) logger()->warn("stage 1: node limit reached, incumbent is not proven optimal");
  logger()->info("stage 1: cost {} $, {} nodes, relaxation slack {:.3g}", cm.dispatch.total_cost, cm.nodes,
                 cm.dispatch.max_relaxation_slack);
  Stage1Outputs o;
  o.dispatch = std::move(cm.dispatch);
  o.dlmp = std::move(cm.dlmp);
  o.nodes = cm.nodes;
  o.proven = cm.proven;
  o.burden = stage1::compute_energy_burden(in.actors, in.network, o.dlmp.price, s.burden_mean);
  o.adjusted = stage1::adjust_prices_equity(o.dlmp, o.burden, in.actors, in.network, s.equity_mode);
  o.settlement = stage1::settlement_report(in.network, in.actors, o.dlmp, o.adjusted, o.dispatch.total_cost);
  return o;
}

std::vector<Stage2Run> solve_stage2(const scenario::ScenarioFile& s, const stage1::DispatchResult& dispatch,
                                    const SolveSettings& settings, const std::vector<double>& weights, bool no_flex) {
  const auto in = s.market_inputs();
  std::vector<Stage2Run> runs;
  for (double w : weights) {
    auto opt = settings.flex;
    opt.w = w;
    Stage2Run r;
    r.w = w;
    r.result = no_flex ? stage2::baseline_no_flex(in, dispatch, s.disturbance, opt)
                       : stage2::clear_flex_market(in, dispatch, s.disturbance, opt);
    if (!r.result.proven) logger()->warn("stage 2 (w={}): node limit reached, incumbent is not proven optimal", w);
    r.fairness = stage2::fairness_metrics(in, r.result);
    logger()->info("stage 2 (w={}{}): curtailed {} kW ({:.4f}%), spread {:.4g}", w, no_flex ? ", no flex" : "",
                   r.result.total_curtailed_kw, 100.0 * r.result.curtailment_fraction(), r.fairness.max_spread);
    runs.push_back(std::move(r));
  }
  return runs;
}

void write_stage1(const fs::path& dir, const scenario::ScenarioFile& s, const Stage1Outputs& out) {
  fs::create_directories(dir);
  const auto in = s.market_inputs();
  write_dispatch_csv(dir / "dispatch.csv", in, out.dispatch);
  write_dlmp_csv(dir / "dlmp.csv", in.network, out);
  write_actor_prices_csv(dir / "actor_prices.csv", in, out);
  scenario::save_scenario(s, dir / "scenario.json");
}

void write_stage2(const fs::path& dir, const scenario::ScenarioFile& s, const std::vector<Stage2Run>& runs) {
  fs::create_directories(dir);
  const auto in = s.market_inputs();
  write_flex_csv(dir / "flex.csv", runs);
  write_curtailment_csv(dir / "curtailment.csv", in, runs);
  write_fairness_csv(dir / "fairness.csv", in.network, runs);
}

int run_stage1(const RunConfig& cfg) {
  const auto s = build_scenario(cfg);
  log_notices(s);
  const auto out = solve_stage1(s, solve_settings(cfg, s));
  write_stage1(cfg.out, s, out);
  return kExitOk;
}

int run_stage2(const RunConfig& cfg, const fs::path& stage1_dir) {
  const fs::path dir = stage1_dir.empty() ? cfg.out : stage1_dir;
  if (cfg.equity_mode || cfg.relax_binaries || cfg.multi_actor) {
    throw ValidationError("--equity-mode, --relax-binaries and --multi-actor change stage 1; rerun run-stage1");
  }
  RunConfig c = cfg;
  if (!c.scenario) {
    const auto scen = dir / "scenario.json";
    if (!fs::exists(scen)) {
      throw MissingArtifactError("no stage-1 artifacts in " + dir.string() + " (scenario.json missing); run run-stage1 --out " +
                                 dir.string() + " first");
    }
    c.scenario = scen.string();
  }
  const auto dispatch_path = dir / "dispatch.csv";
  if (!fs::exists(dispatch_path)) {
    throw MissingArtifactError("no stage-1 artifacts in " + dir.string() + " (dispatch.csv missing); run run-stage1 --out " +
                               dir.string() + " first");
  }
  const auto s = build_scenario(c);
  const auto dispatch = read_dispatch_csv(dispatch_path, s.market_inputs());
  const auto weights = cfg.w.value_or(std::vector<double>{s.w});
  const auto runs = solve_stage2(s, dispatch, solve_settings(c, s), weights, cfg.no_flex.value_or(false));
  write_stage2(cfg.out, s, runs);
  if (fs::weakly_canonical(cfg.out) != fs::weakly_canonical(dir) || cfg.w || cfg.disturbance || cfg.fairness ||
      cfg.pair_scale) {
    scenario::save_scenario(s, cfg.out / "scenario.json");
  }
  return kExitOk;
}

int run_pipeline(const RunConfig& cfg) {
  const auto s = build_scenario(cfg);
  log_notices(s);
  const auto settings = solve_settings(cfg, s);
  const auto s1 = solve_stage1(s, settings);
  write_stage1(cfg.out, s, s1);
  const auto weights = cfg.w.value_or(std::vector<double>{s.w});
  write_stage2(cfg.out, s, solve_stage2(s, s1.dispatch, settings, weights, cfg.no_flex.value_or(false)));
  write_stage2(cfg.out / "modes" / "min_curtail", s, solve_stage2(s, s1.dispatch, settings, {0.0}, false));
  write_stage2(cfg.out / "modes" / "no_flex", s, solve_stage2(s, s1.dispatch, settings, {s.w}, true));

  std::ostringstream text;
  report(cfg.out, text);
  std::ofstream f(cfg.out / "summary.txt", std::ios::binary);
  f << text.str();
  if (!f) throw Error("failed writing " + (cfg.out / "summary.txt").string());
  logger()->info("summary written to {}", (cfg.out / "summary.txt").string());
  return kExitOk;
}

int validate_duals(const RunConfig& cfg, std::ostream& os) {
  stage1::MarketInputs in;
  scenario::ScenarioFile s;
  if (!cfg.scenario && !cfg.case_source && !cfg.portfolio_source) {
    auto sub = scenario::dual_check_case();
    in = {sub.network, sub.portfolio, sub.actors,
          cfg.prices ? load_prices(*cfg.prices) : scenario::default_ug_price()};
    os << "case: builtin 5-bus subcase (buses 1-5 of builtin:ieee33, one DG at bus 4)\n";
  } else {
    s = build_scenario(cfg);
    in = s.market_inputs();
  }
  stage1::DualCheckOptions opt;
  opt.clear = solve_settings(cfg, s).clear;
  const auto rep = stage1::check_duals(in, opt);

  fs::create_directories(cfg.out);
  {
    std::ofstream f(cfg.out / "duals.csv", std::ios::binary);
    f << "bus,t,dlmp_usd_per_kwh,fd_central,fd_forward,fd_backward,rel_error,degenerate\n";
    for (const auto& x : rep.samples) {
      f << x.bus << ',' << x.t << ',' << format_number(x.dlmp) << ',' << format_number(x.central) << ','
        << format_number(x.forward) << ',' << format_number(x.backward) << ',' << format_number(x.rel_error) << ','
        << (x.degenerate ? 1 : 0) << '\n';
    }
    if (!f) throw Error("failed writing " + (cfg.out / "duals.csv").string());
  }
  char line[160];
  std::snprintf(line, sizeof line, "sampled (bus, t): %zu, non-degenerate: %zu\n", rep.samples.size(),
                rep.nondegenerate);
  os << line;
  std::snprintf(line, sizeof line, "within %.0f%%: %zu (%.1f%%)\n", 100.0 * opt.tolerance, rep.within,
                100.0 * rep.fraction_within());
  os << line;
  std::snprintf(line, sizeof line, "max relative dual error: %.6g\n", rep.max_rel_error);
  os << line;
  return kExitOk;
}

int report(const fs::path& dir, std::ostream& os) {
  for (const char* name : {"dispatch.csv", "dlmp.csv", "actor_prices.csv"}) {
    if (!fs::exists(dir / name)) throw MissingArtifactError("no stage-1 artifacts in " + dir.string() + " (" + name + ")");
  }
  double cost = std::nan("");
  {
    Rows d(dir / "dispatch.csv");
    for (std::size_t r = 0; r < d.size(); ++r) {
      if (d.at(r, "component") == "market" && d.at(r, "quantity") == "cost_usd") cost = d.num(r, "value");
    }
  }
  Rows dl(dir / "dlmp.csv");
  double lo = INFINITY, hi = -INFINITY, alo = INFINITY, ahi = -INFINITY;
  for (std::size_t r = 0; r < dl.size(); ++r) {
    lo = std::min(lo, dl.num(r, "dlmp_usd_per_kwh"));
    hi = std::max(hi, dl.num(r, "dlmp_usd_per_kwh"));
    alo = std::min(alo, dl.num(r, "adjusted_usd_per_kwh"));
    ahi = std::max(ahi, dl.num(r, "adjusted_usd_per_kwh"));
  }
  // Energy-weighted mean price by income tier.
  std::map<std::string, std::array<double, 3>> tier;  // dlmp*kwh, adjusted*kwh, kwh
  Rows ap(dir / "actor_prices.csv");
  for (std::size_t r = 0; r < ap.size(); ++r) {
    auto& acc = tier[ap.at(r, "tier")];
    const double e = ap.num(r, "baseline_kw");
    acc[0] += e * ap.num(r, "dlmp_usd_per_kwh");
    acc[1] += e * ap.num(r, "adjusted_usd_per_kwh");
    acc[2] += e;
  }

  os << "stage 1\n";
  os << "  dispatch cost          " << fixed(cost, 2) << " $\n";
  os << "  DLMP range             " << fixed(lo, 5) << " .. " << fixed(hi, 5) << " $/kWh\n";
  os << "  adjusted price range   " << fixed(alo, 5) << " .. " << fixed(ahi, 5) << " $/kWh\n";
  os << "  mean price by tier     (DLMP -> adjusted, $/kWh)\n";
  for (const char* t : {"low", "medium", "high"}) {
    const auto it = tier.find(t);
    if (it == tier.end() || it->second[2] <= 0.0) continue;
    const auto& a = it->second;
    os << "    " << t << std::string(8 - std::string(t).size(), ' ') << fixed(a[0] / a[2], 5) << " -> "
       << fixed(a[1] / a[2], 5) << "\n";
  }

  struct Mode {
    std::string name;
    fs::path dir;
  };
  const std::vector<Mode> modes{{"equity", dir}, {"min-curtail", dir / "modes" / "min_curtail"},
                                {"no-flex", dir / "modes" / "no_flex"}};
  bool header = false;
  for (const auto& m : modes) {
    if (!fs::exists(m.dir / "fairness.csv")) continue;
    if (!header) {
      os << "stage 2\n";
      os << "  mode          w        curtailed kW    curtailment %   max spread\n";
      header = true;
    }
    Rows f(m.dir / "fairness.csv");
    for (std::size_t r = 0; r < f.size(); ++r) {
      if (f.at(r, "t") != "all") continue;
      char line[160];
      std::snprintf(line, sizeof line, "  %-12s  %-7s  %14.4f  %14.4f  %11.6f\n", m.name.c_str(), f.at(r, "w").c_str(),
                    f.num(r, "total_curtailed_kw"), f.num(r, "curtailment_pct"), f.num(r, "spread"));
      os << line;
    }
  }
  if (!header) os << "stage 2\n  (no results)\n";
  return kExitOk;
}

int plotdata(const fs::path& dir) {
  if (!fs::exists(dir / "actor_prices.csv")) {
    throw MissingArtifactError("no stage-1 artifacts in " + dir.string() + " (actor_prices.csv)");
  }
  const fs::path out = dir / "plot";
  fs::create_directories(out);

  // Prices by tier and interval, energy weighted.
  {
    Rows ap(dir / "actor_prices.csv");
    std::map<std::pair<int, long>, std::array<double, 3>> acc;
    auto rank = [](const std::string& t) { return t == "low" ? 0 : t == "medium" ? 1 : 2; };
    for (std::size_t r = 0; r < ap.size(); ++r) {
      auto& a = acc[{rank(ap.at(r, "tier")), std::stol(ap.at(r, "t"))}];
      const double e = ap.num(r, "baseline_kw");
      a[0] += e * ap.num(r, "dlmp_usd_per_kwh");
      a[1] += e * ap.num(r, "adjusted_usd_per_kwh");
      a[2] += e;
    }
    std::ofstream f(out / "prices_by_tier.csv", std::ios::binary);
    f << "tier,t,mean_dlmp_usd_per_kwh,mean_adjusted_usd_per_kwh\n";
    static const char* const names[] = {"low", "medium", "high"};
    for (const auto& [key, a] : acc) {
      if (a[2] <= 0.0) continue;
      f << names[key.first] << ',' << key.second << ',' << format_number(a[0] / a[2]) << ','
        << format_number(a[1] / a[2]) << '\n';
    }
    if (!f) throw Error("failed writing " + (out / "prices_by_tier.csv").string());
  }

  // Curtailment by bus for every mode present.
  {
    std::ofstream f(out / "curtailment_by_bus.csv", std::ios::binary);
    f << "mode,w,bus,t,curtailed_kw,baseline_kw,prorated\n";
    const std::pair<const char*, fs::path> modes[] = {
        {"equity", dir}, {"min-curtail", dir / "modes" / "min_curtail"}, {"no-flex", dir / "modes" / "no_flex"}};
    for (const auto& [name, d] : modes) {
      if (!fs::exists(d / "curtailment.csv")) continue;
      Rows c(d / "curtailment.csv");
      std::map<std::tuple<std::string, int, long>, std::array<double, 2>> acc;
      std::vector<std::string> w_order;
      for (std::size_t r = 0; r < c.size(); ++r) {
        const auto& w = c.at(r, "w");
        if (std::find(w_order.begin(), w_order.end(), w) == w_order.end()) w_order.push_back(w);
        auto& a = acc[{w, std::stoi(c.at(r, "bus")), std::stol(c.at(r, "t"))}];
        a[0] += c.num(r, "curtailed_kw");
        a[1] += c.num(r, "baseline_kw");
      }
      for (const auto& w : w_order) {
        for (const auto& [key, a] : acc) {
          if (std::get<0>(key) != w) continue;
          f << name << ',' << w << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << format_number(a[0])
            << ',' << format_number(a[1]) << ',' << (a[1] > 0.0 ? format_number(a[0] / a[1]) : "") << '\n';
        }
      }
    }
    if (!f) throw Error("failed writing " + (out / "curtailment_by_bus.csv").string());
  }
  return kExitOk;
}

}  // namespace equiflex::app
