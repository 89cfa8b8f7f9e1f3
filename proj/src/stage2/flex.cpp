#include "equiflex/stage2/flex.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "equiflex/error.hpp"

namespace equiflex::stage2 {

using conic::kInf;
using conic::Sense;
using conic::Term;
using conic::VariableRef;
using ders::DerKind;

std::string to_string(FairnessMode m) { return m == FairnessMode::max_min ? "max-min" : "pairwise"; }

FairnessMode fairness_mode_from_string(const std::string& s) {
  if (s == "pairwise") return FairnessMode::pairwise;
  if (s == "max-min") return FairnessMode::max_min;
  throw ParseError("unknown fairness mode '" + s + "' (pairwise, max-min)");
}

std::string to_string(PairScale s) { return s == PairScale::sum ? "sum" : "mean"; }

PairScale pair_scale_from_string(const std::string& s) {
  if (s == "mean") return PairScale::mean;
  if (s == "sum") return PairScale::sum;
  throw ParseError("unknown pair scale '" + s + "' (mean, sum)");
}

Disturbance zero_disturbance(const grid::NetworkCase& net, std::vector<std::size_t> periods) {
  Disturbance d;
  d.periods = std::move(periods);
  d.delta_kw.assign(net.buses.size(), std::vector<double>(net.horizon, 0.0));
  return d;
}

void validate_disturbance(const Disturbance& d, const grid::NetworkCase& net) {
  if (d.delta_kw.size() != net.buses.size()) throw ValidationError("disturbance must have one row per bus");
  if (d.periods.empty()) throw ValidationError("disturbance lists no affected interval");
  for (std::size_t k = 0; k < d.periods.size(); ++k) {
    if (d.periods[k] >= net.horizon) {
      throw ValidationError("disturbance interval " + std::to_string(d.periods[k]) + " outside the horizon");
    }
    if (k > 0 && d.periods[k] <= d.periods[k - 1]) {
      throw ValidationError("disturbance intervals must be strictly increasing");
    }
  }
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    const auto& row = d.delta_kw[b];
    if (row.size() != net.horizon) throw ValidationError("disturbance row length differs from the horizon");
    for (std::size_t t = 0; t < net.horizon; ++t) {
      if (!std::isfinite(row[t])) throw ValidationError("disturbance is not finite");
      const bool affected = std::binary_search(d.periods.begin(), d.periods.end(), t);
      if (!affected && row[t] != 0.0) {
        throw ValidationError("disturbance at bus " + std::to_string(net.buses[b].id) + " is nonzero at t=" +
                              std::to_string(t) + ", which is not an affected interval");
      }
      if (net.buses[b].fixed_load_kw[t] + row[t] < -1e-9) {
        throw ValidationError("disturbance drives the load of bus " + std::to_string(net.buses[b].id) +
                              " negative at t=" + std::to_string(t));
      }
    }
  }
}

namespace {

// Stage-1 net active injection of every DER at a bus, kW.
std::vector<double> stage1_injection(const stage1::MarketInputs& in, const ders::DerSchedule& s, std::size_t t) {
  const auto& net = in.network;
  std::vector<double> inj(net.buses.size(), 0.0);
  const auto& pf = in.portfolio;
  for (const auto& u : pf.pv) inj[net.bus_index(u.bus)] += s.pv_kw.at(u.id).at(t);
  for (const auto& u : pf.dg) inj[net.bus_index(u.bus)] += s.dg_kw.at(u.id).at(t);
  for (const auto& u : pf.flexload) inj[net.bus_index(u.bus)] -= s.flex_kw.at(u.id).at(t);
  auto storage = [&](const ders::StorageUnit& u) {
    const auto& st = s.storage.at(u.id);
    inj[net.bus_index(u.bus)] += st.p_dch_kw.at(t) - st.p_ch_kw.at(t);
  };
  for (const auto& u : pf.bess) storage(u);
  for (const auto& u : pf.ev) storage(u);
  return inj;
}


}  // namespace

Stage2Model assemble_stage2(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                            const Disturbance& dist, std::size_t t, const FlexOptions& opt) {
  const auto& net = in.network;
  if (!(opt.w >= 0.0) || !std::isfinite(opt.w)) throw ValidationError("fairness weight w must be finite and >= 0");
  validate_disturbance(dist, net);
  if (!std::binary_search(dist.periods.begin(), dist.periods.end(), t)) {
    throw ValidationError("interval " + std::to_string(t) + " is not an affected interval");
  }
  if (dispatch.pcc_bus_ids.size() != net.pcc_indices().size()) {
    throw ValidationError("day-ahead dispatch does not match the case");
  }

  Stage2Model m;
  m.t = t;
  m.topo = grid::validate_case(net);
  m.ctx.base_kw = net.base.power_kw();
  m.ctx.dt = net.dt;
  m.ctx.horizon = net.horizon;
  auto& prog = m.program;
  const std::size_t nb = net.buses.size();
  const std::size_t periods[] = {t};
  const std::string ts = ":" + std::to_string(t);

  m.flows = grid::emit_branch_flow(prog, net, m.topo, periods, "rt:");
  m.envelopes = ders::emit_flex_envelopes(prog, m.ctx, in.portfolio, dispatch.schedule, periods, opt.flex_enabled);

  std::vector<std::vector<Term>> p_terms(nb), q_terms(nb);
  std::vector<double> q_rhs(nb, 0.0);
  for (const auto& e : m.envelopes) {
    const std::size_t b = net.bus_index(e.bus);
    if (e.uf) {
      p_terms[b].push_back({*e.uf, 1.0});
      prog.add_objective(*e.uf, opt.eps_flex);
    }
    if (e.df) {
      p_terms[b].push_back({*e.df, -1.0});
      prog.add_objective(*e.df, opt.eps_flex);
    }
  }

  // PV reactive support stays within the capability left at the day-ahead
  // output; curtailing PV only widens it.
  for (const auto& u : in.portfolio.pv) {
    const double s = m.ctx.pu(u.capacity_kva);
    const double p = m.ctx.pu(dispatch.schedule.pv_kw.at(u.id).at(t));
    const double qmax = std::sqrt(std::max(0.0, s * s - p * p));
    const auto q = prog.add_continuous("rt:pv:" + u.id + ":q" + ts, -qmax, qmax);
    q_terms[net.bus_index(u.bus)].push_back({q, 1.0});
  }

  m.pcc = net.pcc_indices();
  const double imax = std::isfinite(net.pcc_import_max_kw) ? m.ctx.pu(net.pcc_import_max_kw) : kInf;
  for (std::size_t b : m.pcc) {
    const std::string id = std::to_string(net.buses[b].id);
    m.p_ug.push_back(prog.add_continuous("rt:ug:" + id + ":p" + ts, -imax, imax));
    m.q_ug.push_back(prog.add_continuous("rt:ug:" + id + ":q" + ts));
    p_terms[b].push_back({m.p_ug.back(), 1.0});
    q_terms[b].push_back({m.q_ug.back(), 1.0});
  }

  // Curtailment per actor, bounded by its post-disturbance load.
  const auto& actors = in.actors.actors;
  for (std::size_t b = 0; b < nb; ++b) m.total_fixed_pu += net.load_pu(b, t);
  const double curtail_coef = m.total_fixed_pu > 0.0 ? 1.0 / m.total_fixed_pu : 0.0;
  std::vector<double> fixed_pu(actors.size(), 0.0);
  for (std::size_t a = 0; a < actors.size(); ++a) {
    const std::size_t b = net.bus_index(actors[a].bus);
    fixed_pu[a] = m.ctx.pu(in.actors.baseline_kw(net, a, t));
    const double cap = std::max(0.0, actors[a].share * m.ctx.pu(net.buses[b].fixed_load_kw[t] + dist.delta_kw[b][t]));
    m.curtail.push_back(prog.add_continuous("rt:curtail:" + actors[a].id + ts, 0.0, cap));
    prog.add_objective(m.curtail.back(), curtail_coef);
    p_terms[b].push_back({m.curtail.back(), 1.0});
    if (fixed_pu[a] > 0.0) m.eligible.push_back(a);
  }

  // Fairness over prorated curtailment c_a / P_a.
  const std::size_t ne = m.eligible.size();
  if (opt.w > 0.0 && ne >= 2) {
    if (opt.mode == FairnessMode::pairwise) {
      const double pairs = double(ne * (ne - 1) / 2);
      m.pair_weight = opt.w * (opt.pair_scale == PairScale::mean ? 1.0 / pairs : 1.0);
      for (std::size_t i = 0; i < ne; ++i) {
        for (std::size_t j = i + 1; j < ne; ++j) {
          const std::size_t a = m.eligible[i], b = m.eligible[j];
          const auto d = prog.add_continuous("rt:pair:" + actors[a].id + "," + actors[b].id + ts, 0.0, kInf);
          const Term ra{m.curtail[a], 1.0 / fixed_pu[a]}, rb{m.curtail[b], -1.0 / fixed_pu[b]};
          prog.add_constraint({{d, 1.0}, {ra.var, -ra.coef}, {rb.var, -rb.coef}}, Sense::greater_equal, 0.0,
                              "rt:pair+:" + actors[a].id + "," + actors[b].id + ts);
          prog.add_constraint({{d, 1.0}, {ra.var, ra.coef}, {rb.var, rb.coef}}, Sense::greater_equal, 0.0,
                              "rt:pair-:" + actors[a].id + "," + actors[b].id + ts);
          prog.add_objective(d, m.pair_weight);
          m.pair_aux.push_back(d);
        }
      }
    } else {
      m.rho_max = prog.add_continuous("rt:rho-max" + ts, 0.0, kInf);
      m.rho_min = prog.add_continuous("rt:rho-min" + ts, 0.0, kInf);
      for (std::size_t a : m.eligible) {
        prog.add_constraint({{*m.rho_max, 1.0}, {m.curtail[a], -1.0 / fixed_pu[a]}}, Sense::greater_equal, 0.0,
                            "rt:rho-max:" + actors[a].id + ts);
        prog.add_constraint({{*m.rho_min, 1.0}, {m.curtail[a], -1.0 / fixed_pu[a]}}, Sense::less_equal, 0.0,
                            "rt:rho-min:" + actors[a].id + ts);
      }
      prog.add_objective(*m.rho_max, opt.w);
      prog.add_objective(*m.rho_min, -opt.w);
    }
  }

  // Loss tie-breaker keeps the current cones tight.
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (net.r_pu(l) > 0.0) prog.add_objective(m.flows.l[l][0], opt.eps_loss * net.r_pu(l));
  }

  const auto inj = stage1_injection(in, dispatch.schedule, t);
  for (std::size_t b = 0; b < nb; ++b) {
    auto bt = grid::balance_terms(net, m.topo, m.flows, b, 0);
    auto p = std::move(bt.active);
    p.insert(p.end(), p_terms[b].begin(), p_terms[b].end());
    auto q = std::move(bt.reactive);
    q.insert(q.end(), q_terms[b].begin(), q_terms[b].end());
    const double load = net.load_pu(b, t) + m.ctx.pu(dist.delta_kw[b][t]);
    const std::string tag = "bus=" + std::to_string(net.buses[b].id) + ",t=" + std::to_string(t);
    m.balance.push_back(prog.add_constraint(std::move(p), Sense::equal, load - m.ctx.pu(inj[b]), "rt:balance:" + tag));
    prog.add_constraint(std::move(q), Sense::equal, net.reactive_load_pu(b, t), "rt:reactive:" + tag);
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

double snap(double v, double tol) { return std::abs(v) < tol ? 0.0 : v; }

struct IntervalOutcome {
  conic::ConicSolution sol;
  std::size_t nodes = 0;
  bool proven = true;
};

IntervalOutcome solve_interval(const Stage2Model& m, const FlexOptions& opt) {
  IntervalOutcome out;
  const auto& prog = m.program;
  auto infeasible = [&]() {
    const auto root = conic::solve_relaxation(prog, opt.tol);
    std::string msg = "flexibility market at t=" + std::to_string(m.t) +
                      " is infeasible even with full curtailment; the disturbance exceeds the network limits";
    const auto tags = conic::certificate_tags(prog, root);
    if (!tags.empty()) {
      msg += "; certificate rows:";
      for (const auto& tag : tags) msg += " " + tag;
    }
    return InfeasibleError(msg);
  };
  if (opt.relax_binaries) {
    out.sol = conic::solve_relaxation(prog, opt.tol);
    if (out.sol.status == conic::SolveStatus::infeasible) throw infeasible();
    if (!out.sol.optimal()) throw SolverLimitError("flexibility relaxation: " + conic::to_string(out.sol.status));
    out.nodes = 1;
    return out;
  }
  const auto rep = conic::solve_mixed_integer(prog, opt.tol, opt.bnb);
  out.nodes = rep.nodes_explored;
  out.proven = rep.proven;
  if (rep.status == conic::BnbStatus::infeasible) throw infeasible();
  if (!rep.has_incumbent) {
    throw SolverLimitError("flexibility market at t=" + std::to_string(m.t) + ": branch-and-bound stopped (" +
                           conic::to_string(rep.status) + ") without a feasible point");
  }
  out.sol = conic::refix_and_dualize(prog, rep.fixed_binaries, opt.tol);
  return out;
}

// The curtailment objective barely touches the current variables, so the
// interior-point method can stop inside the current cones. A second solve
// keeps the binaries, holds the curtailment and fairness terms within a hair
// of their optimum and minimizes the tie-breakers rescaled to order one,
// which closes the cones without letting any unit drift. Falls back to the
// first point when that solve fails.
conic::ConicSolution polish(const grid::NetworkCase& net, const Stage2Model& m, const conic::ConicSolution& sol,
                           const FlexOptions& opt) {
  conic::ConicProgram p = m.program;
  for (const auto& v : p.binaries()) {
    const double b = std::round(sol.primal[v.id]);
    p.set_bounds(v, b, b);
  }
  std::vector<VariableRef> primary = m.curtail;
  primary.insert(primary.end(), m.pair_aux.begin(), m.pair_aux.end());
  if (m.rho_max) primary.push_back(*m.rho_max);
  if (m.rho_min) primary.push_back(*m.rho_min);
  std::vector<Term> budget;
  double value = 0.0;
  const auto& c = m.program.objective();
  for (const auto& v : primary) {
    if (c[v.id] == 0.0) continue;
    budget.push_back({v, c[v.id]});
    value += c[v.id] * sol.primal[v.id];
  }
  p.clear_objective();
  const double flex_weight = opt.eps_loss > 0.0 ? opt.eps_flex / opt.eps_loss : 1.0;
  for (const auto& e : m.envelopes) {
    if (e.uf) p.add_objective(*e.uf, flex_weight);
    if (e.df) p.add_objective(*e.df, flex_weight);
  }
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (net.r_pu(l) > 0.0) p.add_objective(m.flows.l[l][0], net.r_pu(l));
  }
  if (!budget.empty()) {
    p.add_constraint(std::move(budget), Sense::less_equal, value + 1e-9 * (1.0 + std::abs(value)), "rt:budget");
  }
  auto polished = conic::solve_relaxation(p, opt.tol);
  if (!polished.optimal()) return sol;
  polished.primal.resize(m.program.num_variables());
  return polished;
}

}  // namespace

FlexibilityResult clear_flex_market(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                                    const Disturbance& dist, const FlexOptions& opt) {
  validate_disturbance(dist, in.network);
  const auto& net = in.network;
  const std::size_t K = dist.periods.size();
  const double base = net.base.power_kw();
  FlexibilityResult r;
  r.options = opt;
  r.periods = dist.periods;
  r.plan.actor_kw.assign(in.actors.actors.size(), std::vector<double>(K, 0.0));
  r.plan.bus_kw.assign(net.buses.size(), std::vector<double>(K, 0.0));
  r.plan.ug_delta_kw.assign(dispatch.pcc_bus_ids.size(), std::vector<double>(K, 0.0));
  r.plan.flow_delta_kw.assign(net.lines.size(), std::vector<double>(K, 0.0));

  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t t = dist.periods[k];
    const Stage2Model m = assemble_stage2(in, dispatch, dist, t, opt);
    const auto res = solve_interval(m, opt);
    const auto polished = polish(net, m, res.sol, opt);
    const auto& x = polished.primal;
    r.nodes += res.nodes;
    r.proven = r.proven && res.proven;

    for (const auto& e : m.envelopes) {
      FlexValue v;
      v.der = e.der;
      v.kind = e.kind;
      v.bus = e.bus;
      v.t = t;
      v.uf_max_kw = e.uf_max_kw;
      v.df_max_kw = e.df_max_kw;
      if (e.uf) v.uf_kw = snap(x[e.uf->id], opt.snap) * base;
      if (e.df) v.df_kw = snap(x[e.df->id], opt.snap) * base;
      if (e.y_uf) v.y_uf = std::round(x[e.y_uf->id]);
      if (e.y_df) v.y_df = std::round(x[e.y_df->id]);
      // Interior-point values sit a rounding error past an active bound; report the bound.
      v.uf_kw = std::min(v.uf_kw, std::max(v.uf_kw - opt.snap * base, e.uf_max_kw));
      v.df_kw = std::min(v.df_kw, std::max(v.df_kw - opt.snap * base, e.df_max_kw));
      r.flex.push_back(v);
      r.regularization += opt.eps_flex * (v.uf_kw + v.df_kw) / base;
    }
    double curtailed_pu = 0.0;
    for (std::size_t a = 0; a < m.curtail.size(); ++a) {
      const double c = snap(x[m.curtail[a].id], opt.snap);
      curtailed_pu += c;
      r.plan.actor_kw[a][k] = c * base;
      r.plan.bus_kw[net.bus_index(in.actors.actors[a].bus)][k] += c * base;
    }
    r.total_curtailed_kw += curtailed_pu * base;
    r.total_fixed_kw += m.total_fixed_pu * base;
    r.curtailment_term += m.total_fixed_pu > 0.0 ? curtailed_pu / m.total_fixed_pu : 0.0;

    // Fairness term evaluated on the reported (snapped) curtailment.
    std::vector<double> rho;
    for (std::size_t a : m.eligible) rho.push_back(r.plan.actor_kw[a][k] / in.actors.baseline_kw(net, a, t));
    if (opt.mode == FairnessMode::pairwise) {
      double sum = 0.0;
      for (std::size_t i = 0; i < rho.size(); ++i) {
        for (std::size_t j = i + 1; j < rho.size(); ++j) sum += std::abs(rho[i] - rho[j]);
      }
      const double pairs = double(rho.size() * (rho.size() - 1) / 2);
      if (pairs > 0) r.fairness_term += opt.pair_scale == PairScale::mean ? sum / pairs : sum;
    } else if (!rho.empty()) {
      r.fairness_term += *std::max_element(rho.begin(), rho.end()) - *std::min_element(rho.begin(), rho.end());
    }
    double loss = 0.0;
    for (std::size_t l = 0; l < net.lines.size(); ++l) loss += net.r_pu(l) * x[m.flows.l[l][0].id];
    r.regularization += opt.eps_loss * loss;

    for (std::size_t p = 0; p < m.p_ug.size(); ++p) {
      r.plan.ug_delta_kw[p][k] = snap(x[m.p_ug[p].id] - dispatch.p_ug_kw[p][t] / base, opt.snap) * base;
    }
    auto state = grid::extract_state(m.flows, x);
    for (std::size_t l = 0; l < net.lines.size(); ++l) {
      r.plan.flow_delta_kw[l][k] = snap(state.p_flow[l][0] - dispatch.state.p_flow[l][t], opt.snap) * base;
    }
    r.state.push_back(std::move(state));
    r.max_relaxation_slack =
        std::max(r.max_relaxation_slack, conic::soc_exactness(m.program, polished, opt.tol).max_relaxation_slack);
  }
  r.objective = r.curtailment_term + opt.w * r.fairness_term;
  return r;
}

FlexibilityResult baseline_no_flex(const stage1::MarketInputs& in, const stage1::DispatchResult& dispatch,
                                   const Disturbance& dist, FlexOptions opt) {
  opt.flex_enabled = false;
  return clear_flex_market(in, dispatch, dist, opt);
}

FairnessReport fairness_metrics(const stage1::MarketInputs& in, const FlexibilityResult& result) {
  const auto& net = in.network;
  FairnessReport rep;
  const std::size_t na = in.actors.actors.size();
  rep.prorated.assign(na, std::vector<double>(result.periods.size(), std::nan("")));
  for (std::size_t k = 0; k < result.periods.size(); ++k) {
    const std::size_t t = result.periods[k];
    std::vector<double> rho;
    for (std::size_t a = 0; a < na; ++a) {
      const double p = in.actors.baseline_kw(net, a, t);
      if (!(p > 0.0)) continue;
      rep.prorated[a][k] = result.plan.actor_kw[a][k] / p;
      rho.push_back(rep.prorated[a][k]);
    }
    FairnessRow row;
    row.t = t;
    if (!rho.empty()) {
      row.max = *std::max_element(rho.begin(), rho.end());
      row.min = *std::min_element(rho.begin(), rho.end());
      row.spread = row.max - row.min;
      double sum = 0.0;
      for (std::size_t i = 0; i < rho.size(); ++i) {
        for (std::size_t j = i + 1; j < rho.size(); ++j) sum += std::abs(rho[i] - rho[j]);
      }
      const double pairs = double(rho.size() * (rho.size() - 1) / 2);
      row.mean_abs_pairwise = pairs > 0 ? sum / pairs : 0.0;
    }
    rep.max_spread = std::max(rep.max_spread, row.spread);
    rep.rows.push_back(row);
  }
  return rep;
}

double flex_bound_violation(const ders::DerPortfolio& pf, const ders::DerSchedule& s,
                            const std::vector<FlexValue>& flex, double dt) {
  std::map<std::string, const ders::DgUnit*> dg;
  std::map<std::string, const ders::StorageUnit*> storage;
  std::map<std::string, const ders::EvUnit*> ev;
  std::map<std::string, const ders::FlexLoad*> fl;
  for (const auto& u : pf.dg) dg[u.id] = &u;
  for (const auto& u : pf.bess) storage[u.id] = &u;
  for (const auto& u : pf.ev) ev[u.id] = &u;
  for (const auto& u : pf.flexload) fl[u.id] = &u;

  double worst = 0.0;
  // A negative recomputed bound forces the indicator off, so the effective cap is zero.
  auto over = [&](double value, double bound) { worst = std::max(worst, value - std::max(0.0, bound)); };
  for (const auto& v : flex) {
    const std::size_t t = v.t;
    worst = std::max({worst, -v.uf_kw, -v.df_kw});
    // Direction exclusivity of the indicators and their gating.
    if (v.y_uf + v.y_df > 1.0) worst = std::max(worst, 1.0);
    if (v.y_uf == 0.0) over(v.uf_kw, 0.0);
    if (v.y_df == 0.0) over(v.df_kw, 0.0);
    switch (v.kind) {
      case DerKind::pv:
        over(v.uf_kw, 0.0);
        over(v.df_kw, s.pv_kw.at(v.der).at(t));
        break;
      case DerKind::dg: {
        const auto& u = *dg.at(v.der);
        const double p = s.dg_kw.at(v.der).at(t);
        over(v.uf_kw, u.p_max_kw - p);
        over(v.uf_kw, u.ramp_up_kw_per_h * dt);
        over(v.df_kw, p - u.p_min_kw);
        over(v.df_kw, u.ramp_down_kw_per_h * dt);
        break;
      }
      case DerKind::bess:
      case DerKind::ev: {
        const ders::StorageUnit* u = nullptr;
        bool plugged = true;
        if (v.kind == DerKind::bess) {
          u = storage.at(v.der);
        } else {
          const auto* e = ev.at(v.der);
          u = e;
          plugged = t >= e->arrival && t <= e->departure;
        }
        if (!plugged) {
          over(v.uf_kw, 0.0);
          over(v.df_kw, 0.0);
          break;
        }
        const auto& st = s.storage.at(v.der);
        over(v.df_kw, (u->p_ch_max_kw * st.x_ch[t] - st.p_ch_kw[t]) + st.p_dch_kw[t]);
        over(v.df_kw, (u->soc_max_kwh - st.soc_kwh[t]) / dt);
        over(v.uf_kw, (u->p_dch_max_kw * st.x_dch[t] - st.p_dch_kw[t]) + st.p_ch_kw[t]);
        over(v.uf_kw, (st.soc_kwh[t] - u->soc_min_kwh) / dt);
        break;
      }
      case DerKind::flexload: {
        const auto& u = *fl.at(v.der);
        const double p = s.flex_kw.at(v.der).at(t);
        over(v.uf_kw, p);
        over(v.df_kw, u.p_max_kw[t] - p);
        break;
      }
    }
  }
  return worst;
}

}  // namespace equiflex::stage2
