// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "app/commands.hpp"
#include "equiflex/scenario/oracles.hpp"
#include "equiflex/stage1/dual_check.hpp"

namespace {

using namespace equiflex;
namespace fs = std::filesystem;

constexpr std::uint64_t kFirstSeed = 1, kLastSeed = 5;
// Curtailment comparisons carry the stage-2 pruning gap (1e-7 relative).
constexpr double kRelTol = 1e-6;

struct SeedRun {
  std::uint64_t seed = 0;
  scenario::ScenarioFile scen;
  app::Stage1Outputs s1;
  stage2::FlexibilityResult eq, min, noflex;
  double spread_eq = 0, spread_min = 0;
  double seconds = 0;
};

SeedRun run_seed(std::uint64_t seed) {
  app::RunConfig cfg;
  cfg.seed = seed;
  cfg.serial = true;
  SeedRun r;
  r.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  r.scen = app::build_scenario(cfg);
  const auto settings = app::solve_settings(cfg, r.scen);
  r.s1 = app::solve_stage1(r.scen, settings);
  auto one = [&](double w, bool no_flex) {
    auto runs = app::solve_stage2(r.scen, r.s1.dispatch, settings, {w}, no_flex);
    return std::move(runs.front());
  };
  auto eq = one(1.0, false), mn = one(0.0, false);
  r.eq = eq.result;
  r.min = mn.result;
  r.spread_eq = eq.fairness.max_spread;
  r.spread_min = mn.fairness.max_spread;
  r.noflex = one(1.0, true).result;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct Line {
  int id;
  std::string name;
  bool pass = true;
  std::string detail;
};

void report(const Line& l) {
  std::printf("criterion %d (%s): %s | %s\n", l.id, l.name.c_str(), l.pass ? "PASS" : "FAIL", l.detail.c_str());
  std::fflush(stdout);
}

std::string g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = INFINITY, hi = -INFINITY;
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  [[nodiscard]] std::string str() const { return "[" + g(lo) + ", " + g(hi) + "]"; }
};

// ---------------------------------------------------------------------------

Line ordering(const std::vector<SeedRun>& runs) {
  Line l{1, "curtailment ordering"};
  Range eq_min, nf_eq, secs, pct_nf, pct_eq, pct_min;
  for (const auto& r : runs) {
    const double cn = r.noflex.curtailment_fraction(), ce = r.eq.curtailment_fraction(),
                 cm = r.min.curtailment_fraction();
    pct_nf.add(100 * cn);
    pct_eq.add(100 * ce);
    pct_min.add(100 * cm);
    const double ratio = cm > 0 ? ce / cm : (ce == 0 ? 1.0 : INFINITY);
    eq_min.add(ratio);
    nf_eq.add(ce > 0 ? cn / ce : INFINITY);
    secs.add(r.seconds);
    const bool ok = cn > ce && ce >= cm * (1 - kRelTol) && ratio >= 1.0 - kRelTol && ratio <= 1.15 &&
                    cn >= 1.3 * ce && r.seconds <= 600.0;
    if (!ok) {
      l.pass = false;
      l.detail += "seed " + std::to_string(r.seed) + " fails; ";
    }
  }
  l.detail += std::to_string(runs.size()) + " seeds, curtailment % no-flex " + pct_nf.str() + " equity " +
              pct_eq.str() + " min-total " + pct_min.str() + "; equity/min " + eq_min.str() + " (need [1, 1.15]); " +
              "no-flex/equity " + nf_eq.str() + " (need >= 1.3); seconds per seed " + secs.str();
  return l;
}

Line fairness(const std::vector<SeedRun>& runs) {
  Line l{2, "fairness spread"};
  Range ratio, s1, s0;
  for (const auto& r : runs) {
    s1.add(r.spread_eq);
    s0.add(r.spread_min);
    ratio.add(r.spread_min > 0 ? r.spread_eq / r.spread_min : (r.spread_eq == 0 ? 0.0 : INFINITY));
    if (!(r.spread_eq <= 0.5 * r.spread_min)) {
      l.pass = false;
      l.detail += "seed " + std::to_string(r.seed) + " fails; ";
    }
  }
  l.detail += "spread w=1 " + s1.str() + ", w=0 " + s0.str() + ", ratio " + ratio.str() + " (need <= 0.5)";
  return l;
}

// Revenue neutrality recomputed from the price tables: per bus and interval,
// actor payments at adjusted actor prices against the adjusted bus price.
double neutrality_gap(const scenario::ScenarioFile& s, const app::Stage1Outputs& o) {
  const auto& net = s.network;
  const auto& actors = s.actors.actors;
  double worst = 0.0;
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    const auto idx = s.actors.at_bus(net.buses[b].id);
    if (idx.empty()) continue;
    for (std::size_t t = 0; t < net.horizon; ++t) {
      double paid = 0.0, load = 0.0;
      for (auto a : idx) {
        const double p = actors[a].share * net.buses[b].fixed_load_kw[t];
        paid += o.adjusted.actor[a][t] * p;
        load += p;
      }
      if (load <= 0.0) continue;
      const double target = o.adjusted.bus[b][t] * load;
      worst = std::max(worst, std::abs(paid - target) / std::abs(target));
    }
  }
  return worst;
}

Line pricing(const std::vector<SeedRun>& runs) {
  Line l{3, "equity pricing"};
  Range low, high, gap;
  auto check = [&](const std::string& tag, const scenario::ScenarioFile& s, const app::Stage1Outputs& o) {
    const auto& st = o.settlement;
    low.add(st.mean_price_adjusted[0]);
    high.add(st.mean_price_adjusted[2]);
    const double gp = neutrality_gap(s, o);
    gap.add(gp);
    if (!(st.mean_price_adjusted[0] < st.mean_price_adjusted[2]) || !(gp <= 1e-8)) {
      l.pass = false;
      l.detail += tag + " fails; ";
    }
  };
  for (const auto& r : runs) check("seed " + std::to_string(r.seed), r.scen, r.s1);
  // Several actors per bus make the per-bus rescale non-trivial.
  for (std::uint64_t seed : {1u, 2u}) {
    app::RunConfig cfg;
    cfg.seed = seed;
    cfg.multi_actor = true;
    cfg.serial = true;
    const auto s = app::build_scenario(cfg);
    check("multi-actor seed " + std::to_string(seed), s, app::solve_stage1(s, app::solve_settings(cfg, s)));
  }
  l.detail += "mean adjusted price low " + low.str() + " < high " + high.str() + " $/kWh; revenue-neutrality gap " +
              gap.str() + " (need <= 1e-8)";
  return l;
}

Line duals() {
  Line l{4, "DLMP duals"};
  const auto sub = scenario::dual_check_case();
  const stage1::MarketInputs in{sub.network, sub.portfolio, sub.actors, scenario::default_ug_price()};
  const auto rep = stage1::check_duals(in);
  const bool fd_ok = rep.nondegenerate > 0 && rep.fraction_within() >= 0.9;

  // Lossless, uncongested: every nodal price equals the upstream price.
  double worst = 0.0;
  auto lossless = [&](stage1::MarketInputs m) {
    for (auto& ln : m.network.lines) ln.r_ohm = ln.x_ohm = 0.0;
    const auto cm = stage1::clear_energy_market(m);
    for (const auto& row : cm.dlmp.price) {
      for (std::size_t t = 0; t < row.size(); ++t) worst = std::max(worst, std::abs(row[t] - m.ug_price[t]));
    }
  };
  lossless(in);
  auto bare = in;
  bare.portfolio = {};
  lossless(bare);
  const bool ll_ok = worst <= 1e-8;
  l.pass = fd_ok && ll_ok;
  l.detail = "5-bus subcase: " + std::to_string(rep.within) + " of " + std::to_string(rep.nondegenerate) +
             " non-degenerate (bus, t) within 5% (" + g(100 * rep.fraction_within()) + "%, need >= 90%), " +
             std::to_string(rep.samples.size() - rep.nondegenerate) + " degenerate, max rel error " +
             g(rep.max_rel_error) + "; lossless max |DLMP - upstream| " + g(worst) + " (need <= 1e-8)";
  return l;
}

// Two-bus feeder for the oracle comparisons.
grid::NetworkCase feeder2(double r_pu, double x_pu, std::vector<double> load_kw, double s_max_kva) {
  grid::NetworkCase n;
  n.name = "two-bus";
  n.horizon = load_kw.size();
  grid::BusSpec a;
  a.id = 1;
  a.kind = grid::BusKind::pcc;
  a.v_min = a.v_max = 1.0;
  a.fixed_load_kw.assign(n.horizon, 0.0);
  grid::BusSpec b;
  b.id = 2;
  b.v_min = 0.9;
  b.v_max = 1.1;
  b.fixed_load_kw = std::move(load_kw);
  n.buses = {a, b};
  const double z = n.base.z_base_ohm();
  n.lines = {{1, 2, r_pu * z, x_pu * z, s_max_kva}};
  return n;
}

Line oracles(const std::vector<SeedRun>& runs) {
  Line l{5, "solver oracles"};
  // Branch-and-bound against full enumeration.
  std::vector<conic::ConicProgram> corpus;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) corpus.push_back(scenario::random_mixed_program(seed, 2 + seed % 9));
  for (std::size_t T = 1; T <= 5; ++T) {
    stage1::MarketInputs in;
    std::vector<double> load, price;
    for (std::size_t t = 0; t < T; ++t) {
      load.push_back(150.0 + 60.0 * double(t % 3));
      price.push_back(0.05 + 0.06 * double((t * 7) % 5) / 4.0);
    }
    in.network = feeder2(0.02, 0.03, load, 5000.0);
    in.ug_price = price;
    in.actors.actors.push_back({"h2", 2, 60.0, 1.0});
    ders::StorageUnit u;
    u.id = "b2";
    u.bus = 2;
    u.p_ch_max_kw = u.p_dch_max_kw = 80.0;
    u.eff_ch = u.eff_dch = 0.95;
    u.capacity_kwh = u.soc_max_kwh = 200.0;
    u.soc_min_kwh = 20.0;
    u.energy_init_kwh = 60.0;
    u.cost_per_kwh = 0.002;
    u.owner = "h2";
    in.portfolio.bess.push_back(u);
    corpus.push_back(stage1::assemble_stage1(in).program);
  }
  double bnb_worst = 0.0;
  std::size_t max_bin = 0;
  bool bnb_ok = true;
  for (const auto& p : corpus) {
    max_bin = std::max(max_bin, p.binaries().size());
    const auto rep = conic::solve_mixed_integer(p);
    const auto orc = scenario::enumerate_oracle(p);
    if (rep.status != conic::BnbStatus::optimal || !orc.feasible) {
      bnb_ok = false;
      continue;
    }
    const double d = std::abs(rep.incumbent.objective_value - orc.best_objective);
    bnb_worst = std::max(bnb_worst, d);
  }
  bnb_ok = bnb_ok && bnb_worst <= 1e-6 && max_bin <= 10;

  // Dispatch cost against the exhaustive nonlinear grid search.
  struct Case {
    double r, x, load, pmax, cost, price, s_max;
  };
  const double step = 1e-3;
  double grid_worst = 0.0;  // in units of the allowed error
  bool grid_ok = true;
  for (const auto& c : {Case{0.02, 0.03, 600, 300, 0.09, 0.10, 5000}, Case{0.05, 0.05, 400, 200, 0.11, 0.10, 5000},
                        Case{0.01, 0.02, 500, 400, 0.20, 0.10, 5000}, Case{0.01, 0.01, 500, 400, 0.20, 0.10, 300},
                        Case{0.00, 0.00, 250, 200, 0.30, 0.10, 5000}}) {
    auto net = feeder2(c.r, c.x, {c.load}, c.s_max);
    ders::DgUnit dg;
    dg.id = "dg";
    dg.bus = 2;
    dg.p_max_kw = c.pmax;
    dg.ramp_up_kw_per_h = dg.ramp_down_kw_per_h = c.pmax;
    dg.cost_per_kwh = c.cost;
    dg.owner = "h2";
    const auto gs = scenario::grid_search_oracle(net, {dg}, c.price, step);
    stage1::MarketInputs in;
    in.network = net;
    in.ug_price = {c.price};
    in.actors.actors.push_back({"h2", 2, 50.0, 1.0});
    in.portfolio.dg.push_back(dg);
    const double socp = stage1::clear_energy_market(in).dispatch.total_cost;
    const double allowed = 2.0 * std::max(c.cost, c.price) * net.dt * step + 1e-7;
    if (!gs.feasible) {
      grid_ok = false;
      continue;
    }
    grid_worst = std::max(grid_worst, std::abs(gs.best_cost - socp) / allowed);
  }
  grid_ok = grid_ok && grid_worst <= 1.0;

  double slack = 0.0;
  for (const auto& r : runs) {
    slack = std::max({slack, r.s1.dispatch.max_relaxation_slack, r.eq.max_relaxation_slack,
                      r.min.max_relaxation_slack, r.noflex.max_relaxation_slack});
  }
  const bool soc_ok = slack <= 1e-6;
  l.pass = bnb_ok && grid_ok && soc_ok;
  l.detail = "B&B vs enumeration on " + std::to_string(corpus.size()) + " programs (<= " + std::to_string(max_bin) +
             " binaries): max |diff| " + g(bnb_worst) + " (need <= 1e-6); grid search: worst error " + g(grid_worst) +
             " of the grid bound; max cone slack over default runs " + g(slack) + " (need <= 1e-6)";
  return l;
}

// Flexibility caps recomputed from unit data and the stage-1 schedule.
double flex_violation(const ders::DerPortfolio& pf, const ders::DerSchedule& s, const stage2::FlexibilityResult& res,
                      double dt) {
  double worst = 0.0;
  auto cap = [&](double v, double bound) { worst = std::max(worst, v - std::max(0.0, bound)); };
  for (const auto& f : res.flex) {
    const std::size_t t = f.t;
    worst = std::max({worst, -f.uf_kw, -f.df_kw});
    if (f.uf_kw > 0 && f.df_kw > 0) worst = std::max(worst, std::min(f.uf_kw, f.df_kw));
    if (f.kind == ders::DerKind::pv) {
      cap(f.uf_kw, 0.0);
      cap(f.df_kw, s.pv_kw.at(f.der)[t]);
    } else if (f.kind == ders::DerKind::dg) {
      for (const auto& u : pf.dg) {
        if (u.id != f.der) continue;
        const double p = s.dg_kw.at(u.id)[t];
        cap(f.uf_kw, std::min(u.p_max_kw - p, u.ramp_up_kw_per_h * dt));
        cap(f.df_kw, std::min(p - u.p_min_kw, u.ramp_down_kw_per_h * dt));
      }
    } else if (f.kind == ders::DerKind::flexload) {
      for (const auto& u : pf.flexload) {
        if (u.id != f.der) continue;
        const double p = s.flex_kw.at(u.id)[t];
        cap(f.uf_kw, p);
        cap(f.df_kw, u.p_max_kw[t] - p);
      }
    } else {
      const ders::StorageUnit* u = nullptr;
      bool plugged = true;
      for (const auto& b : pf.bess) {
        if (b.id == f.der) u = &b;
      }
      for (const auto& e : pf.ev) {
        if (e.id == f.der) {
          u = &e;
          plugged = t >= e.arrival && t <= e.departure;
        }
      }
      const auto& st = s.storage.at(f.der);
      if (!plugged) {
        cap(f.uf_kw, 0.0);
        cap(f.df_kw, 0.0);
        continue;
      }
      cap(f.uf_kw, u->p_dch_max_kw * st.x_dch[t] - st.p_dch_kw[t] + st.p_ch_kw[t]);
      cap(f.uf_kw, (st.soc_kwh[t] - u->soc_min_kwh) / dt);
      cap(f.df_kw, u->p_ch_max_kw * st.x_ch[t] - st.p_ch_kw[t] + st.p_dch_kw[t]);
      cap(f.df_kw, (u->soc_max_kwh - st.soc_kwh[t]) / dt);
    }
  }
  return worst;
}

Line invariants(const std::vector<SeedRun>& runs) {
  Line l{6, "model invariants"};
  double replay = 0.0, overlap = 0.0, outside = 0.0, trip_short = 0.0, fixed_point = 0.0, flex = 0.0;
  for (const auto& r : runs) {
    const auto& pf = r.scen.portfolio;
    const auto& sched = r.s1.dispatch.schedule;
    const double dt = r.scen.network.dt;
    const std::size_t T = r.scen.network.horizon;
    auto storage = [&](const ders::StorageUnit& u, std::size_t first, std::size_t last) {
      const auto& s = sched.storage.at(u.id);
      double soc = u.energy_init_kwh;
      for (std::size_t t = first; t <= last; ++t) {
        soc += (u.eff_ch * s.p_ch_kw[t] - s.p_dch_kw[t] / u.eff_dch) * dt;
        replay = std::max(replay, std::abs(soc - s.soc_kwh[t]));
      }
      for (std::size_t t = 0; t < T; ++t) {
        if (s.x_ch[t] + s.x_dch[t] > 1.0) overlap = std::max(overlap, 1.0);
        overlap = std::max(overlap, std::min(s.p_ch_kw[t], s.p_dch_kw[t]));
        if (t < first || t > last) outside = std::max({outside, std::abs(s.p_ch_kw[t]), std::abs(s.p_dch_kw[t])});
      }
    };
    for (const auto& u : pf.bess) storage(u, 0, T - 1);
    for (const auto& u : pf.ev) {
      storage(u, u.arrival, u.departure);
      trip_short = std::max(trip_short, u.trip_energy_kwh - sched.storage.at(u.id).soc_kwh[u.departure]);
    }
    for (const auto* res : {&r.eq, &r.min, &r.noflex}) flex = std::max(flex, flex_violation(pf, sched, *res, dt));

    // Zero disturbance: every adjustment must come back as an exact zero.
    app::RunConfig cfg;
    cfg.serial = true;
    const auto settings = app::solve_settings(cfg, r.scen);
    auto quiet = r.scen;
    quiet.disturbance = stage2::zero_disturbance(quiet.network, r.scen.disturbance.periods);
    for (bool no_flex : {false, true}) {
      const auto z = app::solve_stage2(quiet, r.s1.dispatch, settings, {1.0}, no_flex).front().result;
      for (const auto& f : z.flex) fixed_point = std::max({fixed_point, std::abs(f.uf_kw), std::abs(f.df_kw)});
      for (const auto* m : {&z.plan.actor_kw, &z.plan.ug_delta_kw, &z.plan.bus_kw}) {
        for (const auto& row : *m) {
          for (double v : row) fixed_point = std::max(fixed_point, std::abs(v));
        }
      }
    }
  }
  const bool ok = replay <= 1e-9 && overlap == 0.0 && outside == 0.0 && trip_short <= 0.0 && fixed_point == 0.0 &&
                  flex <= 1e-8;
  l.pass = ok;
  l.detail = "SoC replay " + g(replay) + " kWh (need <= 1e-9); simultaneous charge/discharge " + g(overlap) +
             " kW; EV power outside window " + g(outside) + " kW; departure SoC shortfall " + g(trip_short) +
             " kWh; zero-disturbance max adjustment " + g(fixed_point) + " kW (need exactly 0); flex bound violation " +
             g(flex) + " kW (need <= 1e-8)";
  return l;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Line determinism() {
  Line l{7, "determinism"};
  const fs::path root = fs::temp_directory_path() / ("equiflex_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  app::RunConfig first;
  first.seed = 2;
  first.serial = true;
  first.out = root / "first";
  app::run_pipeline(first);
  std::vector<fs::path> dirs{first.out};
  for (const char* name : {"replay_a", "replay_b"}) {
    app::RunConfig c;
    c.scenario = (first.out / "scenario.json").string();
    c.serial = true;
    c.out = root / name;
    app::run_pipeline(c);
    dirs.push_back(c.out);
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(first.out)) {
    if (e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), first.out);
    ++files;
    const auto ref = slurp(e.path());
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      if (!fs::exists(dirs[i] / rel) || slurp(dirs[i] / rel) != ref) {
        ++differ;
        l.detail += rel.string() + " differs; ";
      }
    }
  }
  fs::remove_all(root);
  l.pass = files >= 9 && differ == 0;
  l.detail += std::to_string(files) + " CSV files compared across the original run and 2 serial replays from "
              "scenario.json, " + std::to_string(differ) + " mismatches";
  return l;
}

}  // namespace

int main() {
  std::vector<SeedRun> runs;
  for (std::uint64_t s = kFirstSeed; s <= kLastSeed; ++s) runs.push_back(run_seed(s));
  const Line lines[] = {ordering(runs), fairness(runs), pricing(runs), duals(), oracles(runs), invariants(runs),
                        determinism()};
  int failed = 0;
  for (const auto& l : lines) {
    report(l);
    failed += l.pass ? 0 : 1;
  }
  std::printf("%d of 7 criteria passed\n", 7 - failed);
  return failed == 0 ? 0 : 1;
}
