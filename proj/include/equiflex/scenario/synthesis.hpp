#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "equiflex/scenario/defaults.hpp"
#include "equiflex/stage1/market.hpp"
#include "equiflex/stage2/flex.hpp"

namespace equiflex::scenario {

using stage1::IncomeTier;

struct PenetrationConfig {
  double dg_bess_fraction = defaults::kDgBessFraction;
  double flexible_load_fraction = defaults::kFlexibleLoadFraction;
  double ev_actor_fraction = defaults::kEvActorFraction;
  double pv_fraction = defaults::kPvFraction;
  // PCC import limit as a fraction of peak load; 0 keeps the case's limit.
  double substation_fraction = defaults::kSubstationFraction;
  std::uint64_t seed = 1;
  // Split each bus's load among 2-4 actors instead of one.
  bool multi_actor = false;
};

void validate_config(const PenetrationConfig& c);

struct IncomeTierMap {
  std::map<int, IncomeTier> tier;  // every bus with fixed load
  double income_per_kw[3] = {defaults::kIncomeLow, defaults::kIncomeMedium, defaults::kIncomeHigh};
  std::vector<std::string> notices;
};

/// Default map: low at buses 2-5, 14-19 and 28-33, medium at 6-10 and 20-23
/// (bus 19 sits in both published ranges and is kept low, with a notice),
/// high elsewhere. A custom map must cover every load bus.
IncomeTierMap assign_income_tiers(const grid::NetworkCase& net,
                                  const std::optional<std::map<int, IncomeTier>>& custom = std::nullopt);

struct SynthesizedScenario {
  grid::NetworkCase network;  // input case with the substation limit applied
  ders::DerPortfolio portfolio;
  stage1::ActorTable actors;
};

/// Deterministic per seed. DG and BESS power sum to dg_bess_fraction of the
/// peak load; each load bus gets a flexible load of flexible_load_fraction of
/// its fixed load; EVs go to ev_actor_fraction of the actors.
SynthesizedScenario synthesize_portfolio(const grid::NetworkCase& net, const PenetrationConfig& config,
                                         const IncomeTierMap& tiers);

std::vector<double> default_ug_price();

/// Random multiplicative load change at the listed intervals: every load bus
/// draws a factor in [0, 2), and the deltas are rescaled so that their sum is
/// exactly magnitude times the total fixed load of each interval.
stage2::Disturbance gen_disturbance(const grid::NetworkCase& net, double magnitude, std::uint64_t seed,
                                    std::vector<std::size_t> periods = {std::size_t(defaults::kDisturbanceInterval)});

// ---------------------------------------------------------------------------
// Brute-force dispatch oracle.

/// Exact branch-flow solution of a radial case for given nodal net loads
/// (p.u., load positive) with the root voltage fixed, by backward/forward
/// sweeps. Empty when the sweep diverges.
std::optional<grid::PowerFlowState> exact_power_flow(const grid::NetworkCase& net, const std::vector<double>& p_load,
                                                     const std::vector<double>& q_load, double v_root = 1.0);

struct GridSearchResult {
  bool feasible = false;
  double best_cost = conic::kInf;  // $
  std::vector<double> dg_kw;       // best output per DG
  double import_kw = 0.0;
  std::size_t candidates = 0;
};

/// Exhaustive search over DG outputs on a grid of `step_kw` for a single
/// interval of a case with at most three buses and at most four DGs (no other
/// DER). Each candidate is checked with the exact power flow against voltage,
/// line capacity and import limits.
GridSearchResult grid_search_oracle(const grid::NetworkCase& net, const std::vector<ders::DgUnit>& dgs,
                                    double ug_price, double step_kw);

}  // namespace equiflex::scenario

namespace equiflex::scenario {

/// Buses 1-5 of the builtin feeder with one actor per load bus, a single
/// mid-cost DG at bus 4 and no PCC import limit. Small enough to re-solve
/// once per (bus, t) for the dual check.
SynthesizedScenario dual_check_case();

}  // namespace equiflex::scenario
