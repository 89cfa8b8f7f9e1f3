#pragma once

#include <span>
#include <string>
#include <vector>

#include "equiflex/conic/program.hpp"
#include "equiflex/grid/network.hpp"

namespace equiflex::grid {

using conic::ConicProgram;
using conic::VariableRef;

/// Branch-flow variables for a set of intervals, indexed [bus or line][k] where
/// k is the position of the interval in the emitted period list. Line l is
/// oriented parent to child and carries sending-end flows.
struct BranchFlowVars {
  std::vector<std::size_t> periods;
  std::vector<std::vector<VariableRef>> v;   // squared voltage per bus
  std::vector<std::vector<VariableRef>> l;   // squared current per line
  std::vector<std::vector<VariableRef>> p;   // active flow per line
  std::vector<std::vector<VariableRef>> q;   // reactive flow per line
  std::vector<std::size_t> line_child;       // receiving bus index per line
  std::vector<std::size_t> line_parent;      // sending bus index per line
};

/// Voltage-drop equations, the relaxed current definition v*l >= p^2 + q^2
/// (flagged as a relaxation cone), line capacity cones and squared voltage
/// bounds. Nodal balance rows are left to the caller; `balance_terms` gives
/// the network side of each bus's active and reactive balance.
BranchFlowVars emit_branch_flow(ConicProgram& prog, const NetworkCase& net, const TopologyReport& topo,
                                std::span<const std::size_t> periods, const std::string& prefix);

struct BalanceTerms {
  std::vector<conic::Term> active;    // inflow - r*l - sum of child outflows
  std::vector<conic::Term> reactive;  // inflow - x*l - sum of child outflows
};

BalanceTerms balance_terms(const NetworkCase& net, const TopologyReport& topo, const BranchFlowVars& vars,
                           std::size_t bus, std::size_t k);

/// Power-flow state in p.u. for reporting, [bus or line][k].
struct PowerFlowState {
  std::vector<std::vector<double>> v_sq, i_sq, p_flow, q_flow;
};

PowerFlowState extract_state(const BranchFlowVars& vars, std::span<const double> primal);

}  // namespace equiflex::grid
