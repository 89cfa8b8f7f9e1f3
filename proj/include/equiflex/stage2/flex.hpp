#pragma once

#include <optional>
#include <string>
#include <vector>

#include "equiflex/stage1/market.hpp"

namespace equiflex::stage2 {

using stage1::Matrix;

/// Signed change of fixed load, kW, [bus][t] over the whole horizon; nonzero
/// only at the affected intervals.
struct Disturbance {
  std::vector<std::size_t> periods;  // affected intervals, ascending
  Matrix delta_kw;
};

Disturbance zero_disturbance(const grid::NetworkCase& net, std::vector<std::size_t> periods);

/// Shape, interval range, zero outside `periods`, and post-disturbance load
/// nonnegative at every bus.
void validate_disturbance(const Disturbance& d, const grid::NetworkCase& net);

enum class FairnessMode {
  pairwise,  // sum of |prorated_a - prorated_b| over actor pairs
  max_min,   // largest minus smallest prorated curtailment
};
std::string to_string(FairnessMode m);
FairnessMode fairness_mode_from_string(const std::string& s);

/// How the pairwise sum enters the objective.
enum class PairScale {
  mean,  // divided by the number of pairs
  sum,   // raw sum
};
std::string to_string(PairScale s);
PairScale pair_scale_from_string(const std::string& s);

struct FlexOptions {
  double w = 1.0;
  FairnessMode mode = FairnessMode::pairwise;
  PairScale pair_scale = PairScale::sum;
  bool flex_enabled = true;
  // Tie-breakers kept well below the curtailment term: a cost on every unit of
  // UF/DF and a smaller one on network losses. The first must dominate the
  // second so that no unit moves without a disturbance.
  double eps_flex = 1e-5;
  double eps_loss = 1e-6;
  // Magnitudes below this (p.u.) are reported as exact zeros.
  double snap = 1e-7;
  // Objectives here are fractions of load, so the pruning gaps are tighter
  // than the solver defaults.
  conic::Tolerances tol = [] {
    conic::Tolerances t;
    t.abs_gap = 1e-8;
    t.rel_gap = 1e-7;
    return t;
  }();
  conic::BnbOptions bnb;
  bool relax_binaries = false;
};

/// Handles into one affected interval's flexibility program.
struct Stage2Model {
  conic::ConicProgram program;
  std::size_t t = 0;
  ders::EmitContext ctx;
  grid::TopologyReport topo;
  grid::BranchFlowVars flows;
  std::vector<ders::FlexEnvelope> envelopes;
  std::vector<conic::VariableRef> curtail;  // per actor, p.u.
  std::vector<conic::VariableRef> p_ug, q_ug;  // per PCC bus
  std::vector<std::size_t> pcc;
  std::vector<conic::ConstraintRef> balance;  // per bus
  std::vector<std::size_t> eligible;          // actors with positive fixed load
  std::vector<conic::VariableRef> pair_aux;   // pairwise mode
  std::optional<conic::VariableRef> rho_max, rho_min;
  double total_fixed_pu = 0.0;
  double pair_weight = 0.0;  // objective coefficient of each pairwise variable
};

/// Flexibility program for interval t: fresh branch-flow state at the
/// adjusted injections (stage-1 injections + UF - DF + curtailment + import,
/// against fixed load plus disturbance), per-actor curtailment in
/// [0, post-disturbance load], and the curtailment-plus-fairness objective.
Stage2Model assemble_stage2(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                            const Disturbance& dist, std::size_t t, const FlexOptions& opt);

struct FlexValue {
  std::string der;
  ders::DerKind kind = ders::DerKind::pv;
  int bus = 0;
  std::size_t t = 0;
  double uf_kw = 0.0, df_kw = 0.0;
  double y_uf = 0.0, y_df = 0.0;
  double uf_max_kw = 0.0, df_max_kw = 0.0;
};

struct CurtailmentPlan {
  Matrix actor_kw;   // [actor][k], k indexes the affected intervals
  Matrix bus_kw;     // [bus][k]
  Matrix ug_delta_kw;  // [pcc][k]
  Matrix flow_delta_kw;  // [line][k], sending-end active flow change
};

struct FlexibilityResult {
  std::vector<std::size_t> periods;
  std::vector<FlexValue> flex;
  CurtailmentPlan plan;
  std::vector<grid::PowerFlowState> state;  // per affected interval
  // Objective breakdown summed over intervals.
  double curtailment_term = 0.0;
  double fairness_term = 0.0;  // unweighted
  double regularization = 0.0;
  double objective = 0.0;      // curtailment_term + w * fairness_term
  double total_curtailed_kw = 0.0;
  double total_fixed_kw = 0.0;  // stage-1 fixed load over the affected intervals
  double max_relaxation_slack = 0.0;
  std::size_t nodes = 0;
  bool proven = true;
  FlexOptions options;

  [[nodiscard]] double curtailment_fraction() const {
    return total_fixed_kw > 0.0 ? total_curtailed_kw / total_fixed_kw : 0.0;
  }
};

/// Clear every affected interval in turn (branch-and-bound, then a fixed-binary
/// re-solve). Throws InfeasibleError when even full curtailment cannot restore
/// a feasible state, SolverLimitError when the search stops without a point.
FlexibilityResult clear_flex_market(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                                    const Disturbance& dist, const FlexOptions& opt = {});

/// Same model with every UF/DF fixed to zero; the import stays free.
FlexibilityResult baseline_no_flex(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                                   const Disturbance& dist, FlexOptions opt = {});

struct FairnessRow {
  std::size_t t = 0;
  double max = 0.0, min = 0.0, spread = 0.0, mean_abs_pairwise = 0.0;
};

struct FairnessReport {
  std::vector<FairnessRow> rows;  // per affected interval
  Matrix prorated;                // [actor][k]; NaN for actors without load
  double max_spread = 0.0;
};

FairnessReport fairness_metrics(const stage1::MarketInputs& in, const FlexibilityResult& result);

/// Largest excess of any UF/DF over its bound recomputed from the stage-1
/// schedule and unit data, kW.
double flex_bound_violation(const ders::DerPortfolio& portfolio, const ders::DerSchedule& schedule,
                            const std::vector<FlexValue>& flex, double dt);

}  // namespace equiflex::stage2
