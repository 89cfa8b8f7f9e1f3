#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "equiflex/error.hpp"
#include "equiflex/scenario/scenario_file.hpp"
#include "equiflex/scenario/synthesis.hpp"
#include "equiflex/stage1/dual_check.hpp"

namespace equiflex::scenario {
namespace {

using grid::BusKind;
using grid::BusSpec;
using grid::NetworkCase;

double peak_load_kw(const NetworkCase& net) {
  double peak = 0.0;
  for (std::size_t t = 0; t < net.horizon; ++t) {
    double s = 0.0;
    for (const auto& b : net.buses) s += b.fixed_load_kw[t];
    peak = std::max(peak, s);
  }
  return peak;
}

TEST(Synthesis, ZeroPenetrationGivesEmptyPortfolio) {
  const auto net = grid::builtin_ieee33();
  PenetrationConfig cfg;
  cfg.dg_bess_fraction = cfg.flexible_load_fraction = cfg.ev_actor_fraction = cfg.pv_fraction = 0.0;
  const auto s = synthesize_portfolio(net, cfg, assign_income_tiers(net));
  EXPECT_TRUE(s.portfolio.empty());
  EXPECT_EQ(s.actors.actors.size(), 32u);
}

TEST(Synthesis, DeterministicPerSeed) {
  const auto net = grid::builtin_ieee33();
  const auto tiers = assign_income_tiers(net);
  PenetrationConfig cfg;
  cfg.seed = 11;
  const auto a = synthesize_portfolio(net, cfg, tiers);
  const auto b = synthesize_portfolio(net, cfg, tiers);
  EXPECT_EQ(ders::dump_portfolio(a.portfolio), ders::dump_portfolio(b.portfolio));
  EXPECT_EQ(stage1::dump_actors(a.actors), stage1::dump_actors(b.actors));
  cfg.seed = 12;
  const auto c = synthesize_portfolio(net, cfg, tiers);
  EXPECT_NE(ders::dump_portfolio(a.portfolio), ders::dump_portfolio(c.portfolio));
}

TEST(Synthesis, PenetrationLevels) {
  const auto net = grid::builtin_ieee33();
  const double peak = peak_load_kw(net);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    PenetrationConfig cfg;
    cfg.seed = seed;
    const auto s = synthesize_portfolio(net, cfg, assign_income_tiers(net));
    double dg_bess = 0.0;
    for (const auto& d : s.portfolio.dg) dg_bess += d.p_max_kw;
    for (const auto& b : s.portfolio.bess) dg_bess += b.p_dch_max_kw;
    EXPECT_GE(dg_bess / peak, 0.29);
    EXPECT_LE(dg_bess / peak, 0.31);
    // One flexible load per loaded bus at the configured share of its load.
    EXPECT_EQ(s.portfolio.flexload.size(), 32u);
    const auto& fl = s.portfolio.flexload.front();
    const auto& bus = net.buses[net.bus_index(fl.bus)];
    EXPECT_NEAR(fl.p_max_kw[5], cfg.flexible_load_fraction * bus.fixed_load_kw[5], 1e-9);
    const double evs = std::round(cfg.ev_actor_fraction * double(s.actors.actors.size()));
    EXPECT_EQ(double(s.portfolio.ev.size()), evs);
    EXPECT_NEAR(s.network.pcc_import_max_kw, cfg.substation_fraction * peak, 1e-3);
  }
}

TEST(Synthesis, MultiActorSharesSumToOne) {
  const auto net = grid::builtin_ieee33();
  PenetrationConfig cfg;
  cfg.multi_actor = true;
  const auto s = synthesize_portfolio(net, cfg, assign_income_tiers(net));
  EXPECT_GT(s.actors.actors.size(), 32u);
  for (const auto& b : net.buses) {
    if (b.kind != BusKind::load) continue;
    double share = 0.0;
    const auto at = s.actors.at_bus(b.id);
    EXPECT_GE(at.size(), 2u);
    EXPECT_LE(at.size(), 4u);
    for (auto a : at) share += s.actors.actors[a].share;
    EXPECT_NEAR(share, 1.0, 1e-12) << b.id;
  }
}

TEST(Synthesis, RejectsBadConfig) {
  PenetrationConfig cfg;
  cfg.pv_fraction = -0.1;
  EXPECT_THROW(validate_config(cfg), ValidationError);
}

TEST(IncomeTiers, DefaultMap) {
  const auto net = grid::builtin_ieee33();
  const auto m = assign_income_tiers(net);
  EXPECT_EQ(m.tier.at(3), IncomeTier::low);
  EXPECT_EQ(m.tier.at(7), IncomeTier::medium);
  EXPECT_EQ(m.tier.at(12), IncomeTier::high);
  EXPECT_EQ(m.tier.at(19), IncomeTier::low);
  ASSERT_EQ(m.notices.size(), 1u);
  EXPECT_NE(m.notices[0].find("19"), std::string::npos);
}

TEST(IncomeTiers, CustomMapUsedVerbatimAndMustBeComplete) {
  const auto net = grid::builtin_ieee33();
  std::map<int, IncomeTier> custom;
  for (const auto& b : net.buses) {
    if (b.kind == BusKind::load) custom[b.id] = IncomeTier::medium;
  }
  const auto m = assign_income_tiers(net, custom);
  EXPECT_EQ(m.tier, custom);
  EXPECT_TRUE(m.notices.empty());
  custom.erase(17);
  EXPECT_THROW(assign_income_tiers(net, custom), ValidationError);
}

TEST(Disturbance, AggregateMatchesMagnitude) {
  const auto net = grid::builtin_ieee33();
  const std::size_t t = defaults::kDisturbanceInterval;
  double fixed = 0.0;
  for (const auto& b : net.buses) fixed += b.fixed_load_kw[t];
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = gen_disturbance(net, 0.25, seed);
    double sum = 0.0;
    for (const auto& row : d.delta_kw) sum += row[t];
    EXPECT_GE(sum / fixed, 0.24);
    EXPECT_LE(sum / fixed, 0.26);
    stage2::validate_disturbance(d, net);
  }
  const auto a = gen_disturbance(net, 0.25, 4), b = gen_disturbance(net, 0.25, 4), c = gen_disturbance(net, 0.25, 5);
  EXPECT_EQ(a.delta_kw, b.delta_kw);
  EXPECT_NE(a.delta_kw, c.delta_kw);
}

TEST(Disturbance, ZeroMagnitudeIsZero) {
  const auto net = grid::builtin_ieee33();
  const auto d = gen_disturbance(net, 0.0, 9);
  for (const auto& row : d.delta_kw) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
}

// ---------------------------------------------------------------------------
// Dispatch oracles on 2-bus feeders.

NetworkCase feeder2(double r_pu, double x_pu, double load_kw, double s_max_kva = 5000.0) {
  NetworkCase n;
  n.name = "two-bus";
  n.horizon = 1;
  BusSpec a;
  a.id = 1;
  a.kind = BusKind::pcc;
  a.v_min = a.v_max = 1.0;
  a.fixed_load_kw = {0.0};
  BusSpec b;
  b.id = 2;
  b.v_min = 0.9;
  b.v_max = 1.1;
  b.fixed_load_kw = {load_kw};
  n.buses = {a, b};
  const double z = n.base.z_base_ohm();
  n.lines = {{1, 2, r_pu * z, x_pu * z, s_max_kva}};
  return n;
}

ders::DgUnit dg_at2(double p_max, double cost) {
  ders::DgUnit d;
  d.id = "dg";
  d.bus = 2;
  d.p_max_kw = p_max;
  d.ramp_up_kw_per_h = d.ramp_down_kw_per_h = p_max;
  d.cost_per_kwh = cost;
  d.owner = "h2";
  return d;
}

double socp_cost(const NetworkCase& net, const ders::DgUnit& dg, double price) {
  stage1::MarketInputs in;
  in.network = net;
  in.ug_price = {price};
  in.actors.actors.push_back({"h2", 2, 50.0, 1.0});
  in.portfolio.dg.push_back(dg);
  return stage1::clear_energy_market(in).dispatch.total_cost;
}

TEST(GridSearchOracle, MatchesSocpDispatchCost) {
  const double step = 1e-3;
  struct Case {
    double r, x, load, pmax, cost, price, s_max;
  };
  for (const auto& c : {Case{0.02, 0.03, 600.0, 300.0, 0.09, 0.1, 5000.0},   // DG cheaper than import
                        Case{0.05, 0.05, 400.0, 200.0, 0.11, 0.1, 5000.0},   // losses tip the balance
                        Case{0.01, 0.02, 500.0, 400.0, 0.20, 0.1, 5000.0},   // all import
                        Case{0.01, 0.01, 500.0, 400.0, 0.20, 0.1, 300.0}}) {  // line limit forces the DG
    const auto net = feeder2(c.r, c.x, c.load, c.s_max);
    const auto dg = dg_at2(c.pmax, c.cost);
    const auto g = grid_search_oracle(net, {dg}, c.price, step);
    ASSERT_TRUE(g.feasible);
    const double socp = socp_cost(net, dg, c.price);
    // Cost is Lipschitz in the DG output with constant max(cost, price * marginal import).
    const double lipschitz = 2.0 * std::max(c.cost, c.price) * net.dt;
    EXPECT_NEAR(g.best_cost, socp, lipschitz * step + 1e-7) << c.r << " " << c.cost;
    EXPECT_LE(socp, g.best_cost + 1e-7);  // the relaxation can only do better
  }
}

TEST(GridSearchOracle, LosslessPrefersImportWhenDgIsDearer) {
  const auto net = feeder2(0.0, 0.0, 250.0);
  const auto g = grid_search_oracle(net, {dg_at2(200.0, 0.3)}, 0.1, 1e-3);
  ASSERT_TRUE(g.feasible);
  EXPECT_EQ(g.dg_kw[0], 0.0);
  EXPECT_NEAR(g.import_kw, 250.0, 1e-9);
}

TEST(GridSearchOracle, BothReportInfeasibleBeyondLineCapacity) {
  const auto net = feeder2(0.01, 0.01, 800.0, 300.0);
  const auto dg = dg_at2(100.0, 0.1);
  EXPECT_FALSE(grid_search_oracle(net, {dg}, 0.1, 1e-2).feasible);
  EXPECT_THROW(socp_cost(net, dg, 0.1), InfeasibleError);
}

TEST(ExactPowerFlow, SweepMatchesClosedFormTwoBus) {
  const auto net = feeder2(0.02, 0.04, 0.0);
  const double P = 0.5, Q = 0.2;
  const auto s = exact_power_flow(net, {0.0, P}, {0.0, Q});
  ASSERT_TRUE(s.has_value());
  const double p = s->p_flow[0][0], q = s->q_flow[0][0], l = s->i_sq[0][0];
  EXPECT_NEAR(p - 0.02 * l, P, 1e-10);
  EXPECT_NEAR(q - 0.04 * l, Q, 1e-10);
  EXPECT_NEAR(l * s->v_sq[0][0], p * p + q * q, 1e-10);
}

// ---------------------------------------------------------------------------

TEST(DualCheck, FiniteDifferencesAgreeOnSubcase) {
  const auto s = dual_check_case();
  EXPECT_EQ(s.network.buses.size(), 5u);
  const stage1::MarketInputs in{s.network, s.portfolio, s.actors, default_ug_price()};
  const auto rep = stage1::check_duals(in);
  EXPECT_EQ(rep.samples.size(), 4u * s.network.horizon);
  EXPECT_GT(rep.nondegenerate, rep.samples.size() / 2);
  EXPECT_GE(rep.fraction_within(), 0.9);
}

TEST(ScenarioFile, RoundTripIsByteStable) {
  const auto net = grid::builtin_ieee33();
  PenetrationConfig cfg;
  cfg.seed = 6;
  const auto tiers = assign_income_tiers(net);
  const auto syn = synthesize_portfolio(net, cfg, tiers);
  ScenarioFile f;
  f.portfolio_source = "synth:6";
  f.synthesis = cfg;
  f.notices = tiers.notices;
  f.network = syn.network;
  f.portfolio = syn.portfolio;
  f.actors = syn.actors;
  f.ug_price = default_ug_price();
  f.disturbance_seed = 6;
  f.disturbance = gen_disturbance(f.network, f.disturbance_magnitude, 6);
  f.w = 0.1;
  validate_scenario(f);
  const auto text = dump_scenario(f);
  const auto back = parse_scenario(text);
  EXPECT_EQ(dump_scenario(back), text);
  EXPECT_EQ(back.disturbance.delta_kw, f.disturbance.delta_kw);
  EXPECT_EQ(back.w, 0.1);
  ASSERT_TRUE(back.synthesis.has_value());
  EXPECT_EQ(back.synthesis->seed, 6u);

  const auto path = std::filesystem::temp_directory_path() / "equiflex_scenario_test.json";
  save_scenario(f, path);
  EXPECT_EQ(dump_scenario(load_scenario(path)), text);
  std::filesystem::remove(path);
}

TEST(ScenarioFile, RejectsNewerDefaults) {
  EXPECT_THROW(parse_scenario(R"({"defaults_version": 999})"), ParseError);
}

}  // namespace
}  // namespace equiflex::scenario
