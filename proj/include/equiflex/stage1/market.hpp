#pragma once

#include <optional>
#include <string>
#include <vector>

#include "equiflex/conic/branch_and_bound.hpp"
#include "equiflex/ders/emit.hpp"
#include "equiflex/grid/branch_flow.hpp"
#include "equiflex/grid/network.hpp"

namespace equiflex::stage1 {

using Matrix = std::vector<std::vector<double>>;  // [row][t]

enum class IncomeTier { low, medium, high };
std::string to_string(IncomeTier t);
IncomeTier tier_from_string(const std::string& s);

struct Actor {
  std::string id;
  int bus = 0;
  double daily_income = 0.0;  // $
  double share = 1.0;         // fraction of the bus fixed load
  IncomeTier tier = IncomeTier::high;
};

struct ActorTable {
  std::vector<Actor> actors;

  /// Baseline consumption of actor a at interval t, kW.
  [[nodiscard]] double baseline_kw(const grid::NetworkCase& net, std::size_t a, std::size_t t) const;
  [[nodiscard]] std::vector<std::size_t> at_bus(int bus) const;
};

/// Shares per bus sum to one, incomes positive, ids unique, buses exist and
/// every DER owner is a listed actor.
void validate_actors(const ActorTable& actors, const grid::NetworkCase& net, const ders::DerPortfolio& portfolio);

struct MarketInputs {
  grid::NetworkCase network;
  ders::DerPortfolio portfolio;
  ActorTable actors;
  std::vector<double> ug_price;  // $/kWh per interval
};

/// Handles into the assembled day-ahead program.
struct Stage1Model {
  conic::ConicProgram program;
  grid::TopologyReport topo;
  ders::EmitContext ctx;
  grid::BranchFlowVars flows;
  std::vector<std::vector<conic::ConstraintRef>> balance;   // [bus][t], active
  std::vector<std::vector<conic::ConstraintRef>> reactive;  // [bus][t]
  std::vector<std::vector<conic::VariableRef>> p_ug, q_ug;  // [pcc position][t]
  std::vector<std::size_t> pcc;                             // bus indices
  std::vector<ders::PvVars> pv;
  std::vector<ders::DgVars> dg;
  std::vector<ders::StorageVars> bess, ev;
  std::vector<ders::FlexLoadVars> flex;
};

/// Day-ahead program: import and DER costs, nodal active and reactive balance
/// per (bus, t) tagged "balance:bus=<id>,t=<t>", branch-flow network and every
/// DER feasible set.
Stage1Model assemble_stage1(const MarketInputs& in);

struct DispatchResult {
  ders::DerSchedule schedule;        // kW / kWh
  grid::PowerFlowState state;        // p.u.
  Matrix p_ug_kw;                    // [pcc position][t]
  std::vector<int> pcc_bus_ids;
  double total_cost = 0.0;           // $
  conic::Assignment binaries;
  double max_relaxation_slack = 0.0;  // branch current cones
  double max_balance_residual = 0.0;  // p.u.
};

struct DlmpSchedule {
  Matrix price;           // $/kWh, [bus][t]
  Matrix reactive_price;  // recorded only
};

struct ClearOptions {
  conic::Tolerances tol;
  conic::BnbOptions bnb;
  bool relax_binaries = false;
};

struct ClearedMarket {
  Stage1Model model;
  conic::ConicSolution solution;  // continuous solve with binaries fixed
  DispatchResult dispatch;
  DlmpSchedule dlmp;
  std::size_t nodes = 0;
  bool proven = true;
};

/// Branch-and-bound, then re-solve with the incumbent's binaries fixed and
/// read DLMPs from the balance duals. Throws InfeasibleError (naming the rows
/// of the infeasibility certificate) or SolverLimitError.
ClearedMarket clear_energy_market(const MarketInputs& in, const ClearOptions& opt = {});

/// DLMPs of a solved model: dual of each balance row in $/kWh.
DlmpSchedule extract_dlmp(const Stage1Model& model, const conic::ConicSolution& sol);
DispatchResult extract_dispatch(const MarketInputs& in, const Stage1Model& model, const conic::ConicSolution& sol);

// ---------------------------------------------------------------------------
// Energy burden and equity pricing.

struct BurdenTable {
  Matrix actor;                 // [a][t]
  Matrix bus;                   // [bus index][t]; NaN where the bus has no actors
  std::vector<double> network;  // [t]
};

enum class EquityMode {
  // Literal scaling: lambda_n EB_n / EB_bar, lambda_a = lambda_n_new EB_a / EB_n.
  proportional,
  // Inverse scaling: burdened buses and actors receive lower prices.
  relief,
};
std::string to_string(EquityMode m);
EquityMode equity_mode_from_string(const std::string& s);

enum class NetworkMean { load_weighted, simple };
std::string to_string(NetworkMean m);
NetworkMean network_mean_from_string(const std::string& s);

/// EB_{a,t} = price_{bus(a),t} * baseline_{a,t} * dt / (income_a / T). The bus
/// value is the load-weighted mean over its actors; the network value is the
/// load-weighted (or simple) mean over all actors.
BurdenTable compute_energy_burden(const ActorTable& actors, const grid::NetworkCase& net, const Matrix& bus_price,
                                  NetworkMean mean = NetworkMean::load_weighted);

/// Price matrix [bus][t] equal to the upstream price at every bus.
Matrix uniform_price(const grid::NetworkCase& net, const std::vector<double>& ug_price);

struct AdjustedPriceTable {
  Matrix bus;    // [bus index][t]; buses without actors keep the DLMP
  Matrix actor;  // [a][t]
  // Relative revenue-neutrality residual before the final per-bus rescale (identically
  // zero up to rounding in proportional mode).
  double max_neutrality_error = 0.0;
};

/// Per-bus price multiplier and per-actor ratio, then a per-bus rescale of the
/// actor prices so sum_a price_a * load_a equals bus price * bus load. A
/// residual above 1e-8 after the rescale throws ModelError.
AdjustedPriceTable adjust_prices_equity(const DlmpSchedule& dlmp, const BurdenTable& burden, const ActorTable& actors,
                                        const grid::NetworkCase& net, EquityMode mode = EquityMode::relief);

struct SettlementRow {
  std::string actor;
  int bus = 0;
  IncomeTier tier = IncomeTier::high;
  double energy_kwh = 0.0;
  double payment_dlmp = 0.0;
  double payment_adjusted = 0.0;
};

struct SettlementReport {
  std::vector<SettlementRow> rows;
  double total_dlmp = 0.0;
  double total_adjusted = 0.0;
  // Mean price paid per kWh by tier under the adjusted table, indexed by tier.
  double mean_price_adjusted[3] = {0, 0, 0};
  double mean_price_dlmp[3] = {0, 0, 0};
  double max_bus_payment_gap = 0.0;  // relative revenue-neutrality residual, per bus and t
  double dispatch_cost = 0.0;
  // Payment shift from the adjusted table, $ and relative to total_dlmp.
  double payment_delta = 0.0;
  double payment_delta_rel = 0.0;
  double low_income_payment_delta = 0.0;
};

SettlementReport settlement_report(const grid::NetworkCase& net, const ActorTable& actors, const DlmpSchedule& dlmp,
                                   const AdjustedPriceTable& adjusted, double dispatch_cost);

ActorTable parse_actors(const std::string& json_text);
std::string dump_actors(const ActorTable& actors);

}  // namespace equiflex::stage1
