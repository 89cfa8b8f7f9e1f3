#include "equiflex/grid/branch_flow.hpp"

#include "equiflex/error.hpp"

namespace equiflex::grid {

using conic::AffineExpr;
using conic::ConeKind;
using conic::kInf;
using conic::Sense;
using conic::Term;

BranchFlowVars emit_branch_flow(ConicProgram& prog, const NetworkCase& net, const TopologyReport& topo,
                                std::span<const std::size_t> periods, const std::string& prefix) {
  if (!topo.radial) throw ValidationError("branch-flow model needs a radial network");
  const std::size_t nb = net.buses.size();
  const std::size_t nl = net.lines.size();
  BranchFlowVars vars;
  vars.periods.assign(periods.begin(), periods.end());
  vars.v.assign(nb, {});
  vars.l.assign(nl, {});
  vars.p.assign(nl, {});
  vars.q.assign(nl, {});
  vars.line_child.assign(nl, 0);
  vars.line_parent.assign(nl, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    if (topo.parent_line[b] < 0) continue;
    const auto l = std::size_t(topo.parent_line[b]);
    vars.line_child[l] = b;
    vars.line_parent[l] = std::size_t(topo.parent[b]);
  }
  for (std::size_t k = 0; k < periods.size(); ++k) {
    const std::string ts = ":" + std::to_string(periods[k]);
    for (std::size_t b : topo.order) {
      const auto& bus = net.buses[b];
      vars.v[b].push_back(prog.add_continuous(prefix + "v:" + std::to_string(bus.id) + ts, bus.v_min * bus.v_min,
                                              bus.v_max * bus.v_max));
    }
    for (std::size_t l = 0; l < nl; ++l) {
      const std::string name = std::to_string(net.buses[vars.line_parent[l]].id) + "-" +
                               std::to_string(net.buses[vars.line_child[l]].id) + ts;
      vars.p[l].push_back(prog.add_continuous(prefix + "pf:" + name));
      vars.q[l].push_back(prog.add_continuous(prefix + "qf:" + name));
      vars.l[l].push_back(prog.add_continuous(prefix + "isq:" + name, 0.0, kInf));
    }
  }
  for (std::size_t k = 0; k < periods.size(); ++k) {
    const std::string ts = ":" + std::to_string(periods[k]);
    for (std::size_t l = 0; l < nl; ++l) {
      const std::size_t from = vars.line_parent[l], to = vars.line_child[l];
      const std::string name = std::to_string(net.buses[from].id) + "-" + std::to_string(net.buses[to].id) + ts;
      const double r = net.r_pu(l), x = net.x_pu(l);
      // v_from - v_to - 2 (r p + x q) + (r^2 + x^2) l = 0
      prog.add_constraint({{vars.v[from][k], 1.0},
                           {vars.v[to][k], -1.0},
                           {vars.p[l][k], -2.0 * r},
                           {vars.q[l][k], -2.0 * x},
                           {vars.l[l][k], r * r + x * x}},
                          Sense::equal, 0.0, prefix + "vdrop:" + name);
      // 2 (v/2) l >= p^2 + q^2
      prog.add_cone(ConeKind::rotated_second_order,
                    {AffineExpr(vars.v[from][k], 0.5), AffineExpr(vars.l[l][k]), AffineExpr(vars.p[l][k]),
                     AffineExpr(vars.q[l][k])},
                    prefix + "current:" + name, true);
      prog.add_cone(ConeKind::second_order,
                    {AffineExpr(net.s_max_pu(l)), AffineExpr(vars.p[l][k]), AffineExpr(vars.q[l][k])},
                    prefix + "capacity:" + name);
    }
  }
  return vars;
}

BalanceTerms balance_terms(const NetworkCase& net, const TopologyReport& topo, const BranchFlowVars& vars,
                           std::size_t bus, std::size_t k) {
  BalanceTerms out;
  if (topo.parent_line[bus] >= 0) {
    const auto l = std::size_t(topo.parent_line[bus]);
    out.active.push_back({vars.p[l][k], 1.0});
    out.active.push_back({vars.l[l][k], -net.r_pu(l)});
    out.reactive.push_back({vars.q[l][k], 1.0});
    out.reactive.push_back({vars.l[l][k], -net.x_pu(l)});
  }
  for (std::size_t c : topo.children[bus]) {
    const auto l = std::size_t(topo.parent_line[c]);
    out.active.push_back({vars.p[l][k], -1.0});
    out.reactive.push_back({vars.q[l][k], -1.0});
  }
  return out;
}

PowerFlowState extract_state(const BranchFlowVars& vars, std::span<const double> x) {
  PowerFlowState s;
  auto grab = [&](const std::vector<std::vector<VariableRef>>& refs) {
    std::vector<std::vector<double>> out(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      for (auto r : refs[i]) out[i].push_back(x[r.id]);
    }
    return out;
  };
  s.v_sq = grab(vars.v);
  s.i_sq = grab(vars.l);
  s.p_flow = grab(vars.p);
  s.q_flow = grab(vars.q);
  return s;
}

}  // namespace equiflex::grid
