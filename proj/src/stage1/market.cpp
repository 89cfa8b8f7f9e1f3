#include "equiflex/stage1/market.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "../common/json_util.hpp"
#include "equiflex/error.hpp"

namespace equiflex::stage1 {

using conic::ConicSolution;
using conic::kInf;
using conic::Sense;
using conic::Term;
using conic::VariableRef;

std::string to_string(IncomeTier t) {
  switch (t) {
    case IncomeTier::low: return "low";
    case IncomeTier::medium: return "medium";
    case IncomeTier::high: return "high";
  }
  return "high";
}

IncomeTier tier_from_string(const std::string& s) {
  if (s == "low") return IncomeTier::low;
  if (s == "medium") return IncomeTier::medium;
  if (s == "high") return IncomeTier::high;
  throw ParseError("unknown income tier '" + s + "'");
}

std::string to_string(EquityMode m) { return m == EquityMode::relief ? "relief" : "proportional"; }

EquityMode equity_mode_from_string(const std::string& s) {
  if (s == "relief") return EquityMode::relief;
  if (s == "proportional") return EquityMode::proportional;
  throw ParseError("unknown equity mode '" + s + "' (relief, proportional)");
}

std::string to_string(NetworkMean m) { return m == NetworkMean::simple ? "simple" : "load-weighted"; }

NetworkMean network_mean_from_string(const std::string& s) {
  if (s == "load-weighted") return NetworkMean::load_weighted;
  if (s == "simple") return NetworkMean::simple;
  throw ParseError("unknown burden mean '" + s + "' (load-weighted, simple)");
}

double ActorTable::baseline_kw(const grid::NetworkCase& net, std::size_t a, std::size_t t) const {
  const Actor& act = actors.at(a);
  return act.share * net.buses[net.bus_index(act.bus)].fixed_load_kw.at(t);
}

std::vector<std::size_t> ActorTable::at_bus(int bus) const {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < actors.size(); ++a) {
    if (actors[a].bus == bus) out.push_back(a);
  }
  return out;
}

void validate_actors(const ActorTable& table, const grid::NetworkCase& net, const ders::DerPortfolio& portfolio) {
  std::set<std::string> ids;
  std::map<int, double> share;
  for (const Actor& a : table.actors) {
    const std::string where = "actor '" + a.id + "'";
    if (a.id.empty()) throw ValidationError("actor with empty id");
    if (!ids.insert(a.id).second) throw ValidationError(where + ": duplicate id");
    (void)net.bus_index(a.bus);
    if (!(a.daily_income > 0.0) || !std::isfinite(a.daily_income)) {
      throw ValidationError(where + ": daily_income must be positive");
    }
    if (!(a.share > 0.0) || a.share > 1.0) throw ValidationError(where + ": share must lie in (0, 1]");
    share[a.bus] += a.share;
  }
  for (const auto& [bus, s] : share) {
    if (std::abs(s - 1.0) > 1e-9) {
      throw ValidationError("bus " + std::to_string(bus) + ": actor shares sum to " + std::to_string(s));
    }
  }
  for (const auto& owner : portfolio.owners()) {
    if (!owner.empty() && !ids.count(owner)) throw ValidationError("DER owner '" + owner + "' is not a listed actor");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string balance_tag(const char* kind, int bus, std::size_t t) {
  return std::string(kind) + ":bus=" + std::to_string(bus) + ",t=" + std::to_string(t);
}

void check_inputs(const MarketInputs& in) {
  const auto& net = in.network;
  if (in.ug_price.size() != net.horizon) {
    throw ValidationError("ug_price has " + std::to_string(in.ug_price.size()) + " values, horizon is " +
                          std::to_string(net.horizon));
  }
  for (std::size_t t = 0; t < in.ug_price.size(); ++t) {
    if (!(in.ug_price[t] >= 0.0) || !std::isfinite(in.ug_price[t])) {
      throw ValidationError("ug_price at t=" + std::to_string(t) + " must be finite and nonnegative");
    }
  }
  ders::validate_portfolio(in.portfolio, net.horizon, net.dt);
  auto check_bus = [&](int bus, const std::string& id) {
    try {
      (void)net.bus_index(bus);
    } catch (const ValidationError&) {
      throw ValidationError("DER '" + id + "' sits on unknown bus " + std::to_string(bus));
    }
  };
  for (const auto& u : in.portfolio.pv) check_bus(u.bus, u.id);
  for (const auto& u : in.portfolio.dg) check_bus(u.bus, u.id);
  for (const auto& u : in.portfolio.bess) check_bus(u.bus, u.id);
  for (const auto& u : in.portfolio.ev) check_bus(u.bus, u.id);
  for (const auto& u : in.portfolio.flexload) check_bus(u.bus, u.id);
  validate_actors(in.actors, net, in.portfolio);
}

}  // namespace

Stage1Model assemble_stage1(const MarketInputs& in) {
  check_inputs(in);
  const auto& net = in.network;
  Stage1Model m;
  m.topo = grid::validate_case(net);
  m.ctx.base_kw = net.base.power_kw();
  m.ctx.dt = net.dt;
  m.ctx.horizon = net.horizon;
  const std::size_t nb = net.buses.size(), T = net.horizon;
  auto& prog = m.program;

  std::vector<std::size_t> periods(T);
  std::iota(periods.begin(), periods.end(), std::size_t{0});
  m.flows = grid::emit_branch_flow(prog, net, m.topo, periods, "");

  // Per-bus injections (+) and withdrawals (-) by interval.
  std::vector<std::vector<std::vector<Term>>> p_inj(nb, std::vector<std::vector<Term>>(T));
  std::vector<std::vector<std::vector<Term>>> q_inj(nb, std::vector<std::vector<Term>>(T));

  m.pcc = net.pcc_indices();
  const double imax = std::isfinite(net.pcc_import_max_kw) ? m.ctx.pu(net.pcc_import_max_kw) : kInf;
  for (std::size_t b : m.pcc) {
    const std::string id = std::to_string(net.buses[b].id);
    std::vector<VariableRef> p, q;
    for (std::size_t t = 0; t < T; ++t) {
      p.push_back(prog.add_continuous("ug:" + id + ":p:" + std::to_string(t), -imax, imax));
      q.push_back(prog.add_continuous("ug:" + id + ":q:" + std::to_string(t)));
      prog.add_objective(p.back(), m.ctx.cost(in.ug_price[t]));
      p_inj[b][t].push_back({p.back(), 1.0});
      q_inj[b][t].push_back({q.back(), 1.0});
    }
    m.p_ug.push_back(std::move(p));
    m.q_ug.push_back(std::move(q));
  }

  const auto& pf = in.portfolio;
  for (const auto& u : pf.pv) {
    m.pv.push_back(ders::emit_pv(prog, m.ctx, u));
    const std::size_t b = net.bus_index(u.bus);
    for (std::size_t t = 0; t < T; ++t) {
      p_inj[b][t].push_back({m.pv.back().p[t], 1.0});
      q_inj[b][t].push_back({m.pv.back().q[t], 1.0});
    }
  }
  for (const auto& u : pf.dg) {
    m.dg.push_back(ders::emit_dg(prog, m.ctx, u));
    const std::size_t b = net.bus_index(u.bus);
    for (std::size_t t = 0; t < T; ++t) p_inj[b][t].push_back({m.dg.back().p[t], 1.0});
  }
  auto storage_terms = [&](const ders::StorageVars& v, int bus) {
    const std::size_t b = net.bus_index(bus);
    for (std::size_t t = 0; t < T; ++t) {
      p_inj[b][t].push_back({v.p_dch[t], 1.0});
      p_inj[b][t].push_back({v.p_ch[t], -1.0});
    }
  };
  for (const auto& u : pf.bess) {
    m.bess.push_back(ders::emit_bess(prog, m.ctx, u));
    storage_terms(m.bess.back(), u.bus);
  }
  for (const auto& u : pf.ev) {
    m.ev.push_back(ders::emit_ev(prog, m.ctx, u));
    storage_terms(m.ev.back(), u.bus);
  }
  std::map<int, std::vector<const ders::FlexLoadVars*>> flex_at;
  m.flex.reserve(pf.flexload.size());
  for (const auto& u : pf.flexload) {
    m.flex.push_back(ders::emit_flexload(prog, m.ctx, u));
    const std::size_t b = net.bus_index(u.bus);
    for (std::size_t t = 0; t < T; ++t) {
      p_inj[b][t].push_back({m.flex.back().up[t], -1.0});
      p_inj[b][t].push_back({m.flex.back().down[t], 1.0});
    }
  }
  for (std::size_t i = 0; i < pf.flexload.size(); ++i) flex_at[pf.flexload[i].bus].push_back(&m.flex[i]);

  for (const auto& bus : net.buses) {
    if (bus.min_energy_kwh <= 0.0) continue;
    const auto& f = flex_at[bus.id];
    ders::emit_energy_floor(prog, m.ctx, bus.id, bus.fixed_load_kw, bus.min_energy_kwh, f);
  }

  // Nodal balance: network inflow + injections = fixed load.
  m.balance.assign(nb, {});
  m.reactive.assign(nb, {});
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      auto net_terms = grid::balance_terms(net, m.topo, m.flows, b, t);
      auto p = std::move(net_terms.active);
      p.insert(p.end(), p_inj[b][t].begin(), p_inj[b][t].end());
      auto q = std::move(net_terms.reactive);
      q.insert(q.end(), q_inj[b][t].begin(), q_inj[b][t].end());
      m.balance[b].push_back(
          prog.add_constraint(std::move(p), Sense::equal, net.load_pu(b, t), balance_tag("balance", net.buses[b].id, t)));
      m.reactive[b].push_back(prog.add_constraint(std::move(q), Sense::equal, net.reactive_load_pu(b, t),
                                                  balance_tag("reactive", net.buses[b].id, t)));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

DlmpSchedule extract_dlmp(const Stage1Model& m, const ConicSolution& sol) {
  DlmpSchedule d;
  const double scale = m.ctx.base_kw * m.ctx.dt;
  d.price.assign(m.balance.size(), {});
  d.reactive_price.assign(m.reactive.size(), {});
  for (std::size_t b = 0; b < m.balance.size(); ++b) {
    for (auto r : m.balance[b]) d.price[b].push_back(sol.duals.at(r.id) / scale);
    for (auto r : m.reactive[b]) d.reactive_price[b].push_back(sol.duals.at(r.id) / scale);
  }
  return d;
}

DispatchResult extract_dispatch(const MarketInputs& in, const Stage1Model& m, const ConicSolution& sol) {
  DispatchResult r;
  const auto& x = sol.primal;
  const std::size_t T = m.ctx.horizon;
  auto kw = [&](VariableRef v) { return m.ctx.kw(x[v.id]); };
  const auto& pf = in.portfolio;
  for (std::size_t i = 0; i < pf.pv.size(); ++i) {
    auto& out = r.schedule.pv_kw[pf.pv[i].id];
    for (auto v : m.pv[i].p) out.push_back(kw(v));
  }
  for (std::size_t i = 0; i < pf.dg.size(); ++i) {
    auto& out = r.schedule.dg_kw[pf.dg[i].id];
    for (auto v : m.dg[i].p) out.push_back(kw(v));
  }
  for (std::size_t i = 0; i < pf.flexload.size(); ++i) {
    auto& out = r.schedule.flex_kw[pf.flexload[i].id];
    for (std::size_t t = 0; t < T; ++t) out.push_back(kw(m.flex[i].up[t]) - kw(m.flex[i].down[t]));
  }
  auto storage = [&](const std::string& id, const ders::StorageVars& v) {
    ders::StorageSchedule s;
    for (std::size_t t = 0; t < T; ++t) {
      s.p_ch_kw.push_back(kw(v.p_ch[t]));
      s.p_dch_kw.push_back(kw(v.p_dch[t]));
      s.x_ch.push_back(std::round(x[v.x_ch[t].id]));
      s.x_dch.push_back(std::round(x[v.x_dch[t].id]));
      s.soc_kwh.push_back(v.soc[t] ? kw(*v.soc[t]) : std::nan(""));
    }
    r.schedule.storage[id] = std::move(s);
  };
  for (std::size_t i = 0; i < pf.bess.size(); ++i) storage(pf.bess[i].id, m.bess[i]);
  for (std::size_t i = 0; i < pf.ev.size(); ++i) storage(pf.ev[i].id, m.ev[i]);

  r.state = grid::extract_state(m.flows, x);
  for (std::size_t k = 0; k < m.pcc.size(); ++k) {
    r.pcc_bus_ids.push_back(in.network.buses[m.pcc[k]].id);
    std::vector<double> row;
    for (auto v : m.p_ug[k]) row.push_back(kw(v));
    r.p_ug_kw.push_back(std::move(row));
  }
  r.total_cost = m.program.evaluate_objective(x);
  for (auto b : m.program.binaries()) r.binaries.emplace_back(b, std::round(x[b.id]));

  double slack = 0.0;
  for (const auto& c : m.program.cones()) {
    if (!c.relaxation) continue;
    const double u = conic::evaluate(c.members[0], x), v = conic::evaluate(c.members[1], x);
    double s = 2.0 * u * v;
    for (std::size_t i = 2; i < c.members.size(); ++i) {
      const double e = conic::evaluate(c.members[i], x);
      s -= e * e;
    }
    slack = std::max(slack, s);
  }
  r.max_relaxation_slack = slack;

  double res = 0.0;
  for (const auto& rows : m.balance) {
    for (auto ref : rows) {
      const auto& c = m.program.constraints()[ref.id];
      double lhs = 0.0;
      for (const auto& term : c.terms) lhs += term.coef * x[term.var.id];
      res = std::max(res, std::abs(lhs - c.rhs));
    }
  }
  r.max_balance_residual = res;
  return r;
}

ClearedMarket clear_energy_market(const MarketInputs& in, const ClearOptions& opt) {
  ClearedMarket out;
  out.model = assemble_stage1(in);
  auto& prog = out.model.program;
  prog.seal();

  auto infeasible = [&](const std::string& what) {
    const auto root = conic::solve_relaxation(prog, opt.tol);
    std::string msg = what;
    const auto tags = conic::certificate_tags(prog, root);
    if (!tags.empty()) {
      msg += "; certificate rows:";
      for (const auto& t : tags) msg += " " + t;
    }
    return InfeasibleError(msg);
  };

  if (opt.relax_binaries) {
    out.solution = conic::solve_relaxation(prog, opt.tol);
    if (out.solution.status == conic::SolveStatus::infeasible) throw infeasible("energy market is infeasible");
    if (!out.solution.optimal()) {
      throw SolverLimitError("energy market relaxation: " + conic::to_string(out.solution.status));
    }
    out.nodes = 1;
  } else {
    const auto rep = conic::solve_mixed_integer(prog, opt.tol, opt.bnb);
    out.nodes = rep.nodes_explored;
    out.proven = rep.proven;
    if (rep.status == conic::BnbStatus::infeasible) throw infeasible("energy market is infeasible");
    if (!rep.has_incumbent) {
      throw SolverLimitError("energy market: branch-and-bound stopped (" + conic::to_string(rep.status) +
                             ") without a feasible schedule after " + std::to_string(rep.nodes_explored) + " nodes");
    }
    out.solution = conic::refix_and_dualize(prog, rep.fixed_binaries, opt.tol);
  }
  out.dispatch = extract_dispatch(in, out.model, out.solution);
  out.dlmp = extract_dlmp(out.model, out.solution);
  return out;
}

// ---------------------------------------------------------------------------

Matrix uniform_price(const grid::NetworkCase& net, const std::vector<double>& ug_price) {
  return Matrix(net.buses.size(), ug_price);
}

BurdenTable compute_energy_burden(const ActorTable& actors, const grid::NetworkCase& net, const Matrix& bus_price,
                                  NetworkMean mean) {
  const std::size_t T = net.horizon, nb = net.buses.size(), na = actors.actors.size();
  if (bus_price.size() != nb) throw ValidationError("price table must have one row per bus");
  BurdenTable eb;
  eb.actor.assign(na, std::vector<double>(T, 0.0));
  eb.bus.assign(nb, std::vector<double>(T, std::nan("")));
  eb.network.assign(T, 0.0);
  if (na == 0) throw ValidationError("energy burden needs at least one actor");
  for (std::size_t a = 0; a < na; ++a) {
    const Actor& act = actors.actors[a];
    if (!(act.daily_income > 0.0)) throw ValidationError("actor '" + act.id + "': zero income");
    const double per_interval = act.daily_income / double(T);
    const auto& price = bus_price[net.bus_index(act.bus)];
    for (std::size_t t = 0; t < T; ++t) {
      eb.actor[a][t] = price.at(t) * actors.baseline_kw(net, a, t) * net.dt / per_interval;
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> num(nb, 0.0), den(nb, 0.0);
    double all_num = 0.0, all_den = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t b = net.bus_index(actors.actors[a].bus);
      const double w = actors.baseline_kw(net, a, t);
      num[b] += w * eb.actor[a][t];
      den[b] += w;
      const double wn = mean == NetworkMean::load_weighted ? w : 1.0;
      all_num += wn * eb.actor[a][t];
      all_den += wn;
    }
    for (std::size_t b = 0; b < nb; ++b) {
      if (den[b] > 0.0) eb.bus[b][t] = num[b] / den[b];
    }
    eb.network[t] = all_den > 0.0 ? all_num / all_den : 0.0;
  }
  return eb;
}

AdjustedPriceTable adjust_prices_equity(const DlmpSchedule& dlmp, const BurdenTable& burden, const ActorTable& actors,
                                        const grid::NetworkCase& net, EquityMode mode) {
  const std::size_t T = net.horizon, nb = net.buses.size();
  AdjustedPriceTable out;
  out.bus = dlmp.price;
  out.actor.assign(actors.actors.size(), std::vector<double>(T, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    const double eb_bar = burden.network.at(t);
    if (!(eb_bar > 0.0)) throw ValidationError("network energy burden is zero at t=" + std::to_string(t));
    for (std::size_t b = 0; b < nb; ++b) {
      const auto members = actors.at_bus(net.buses[b].id);
      if (members.empty()) continue;
      const double eb_n = burden.bus[b][t];
      if (!(eb_n > 0.0)) {
        throw ValidationError("bus " + std::to_string(net.buses[b].id) + ": energy burden is zero at t=" +
                              std::to_string(t));
      }
      const double lam = dlmp.price[b][t];
      const double lam_n = mode == EquityMode::proportional ? lam * eb_n / eb_bar : lam * eb_bar / eb_n;
      out.bus[b][t] = lam_n;
      double paid = 0.0, load = 0.0;
      for (std::size_t a : members) {
        const double eb_a = burden.actor[a][t];
        if (!(eb_a > 0.0)) throw ValidationError("actor '" + actors.actors[a].id + "': energy burden is zero");
        const double lam_a = mode == EquityMode::proportional ? lam_n * eb_a / eb_n : lam_n * eb_n / eb_a;
        out.actor[a][t] = lam_a;
        const double p = actors.baseline_kw(net, a, t);
        paid += lam_a * p;
        load += p;
      }
      const double target = lam_n * load;
      const double scale = std::max(std::abs(target), 1e-300);
      out.max_neutrality_error = std::max(out.max_neutrality_error, std::abs(paid - target) / scale);
      if (paid != 0.0 && paid != target) {
        const double k = target / paid;
        double again = 0.0;
        for (std::size_t a : members) {
          out.actor[a][t] *= k;
          again += out.actor[a][t] * actors.baseline_kw(net, a, t);
        }
        if (std::abs(again - target) > 1e-8 * scale) {
          throw ModelError("revenue neutrality lost at bus " + std::to_string(net.buses[b].id) + ", t=" +
                           std::to_string(t));
        }
      }
    }
  }
  return out;
}

SettlementReport settlement_report(const grid::NetworkCase& net, const ActorTable& actors, const DlmpSchedule& dlmp,
                                   const AdjustedPriceTable& adjusted, double dispatch_cost) {
  SettlementReport r;
  r.dispatch_cost = dispatch_cost;
  const std::size_t T = net.horizon;
  double energy_tier[3] = {0, 0, 0}, pay_tier[3] = {0, 0, 0}, pay_tier_dlmp[3] = {0, 0, 0};
  for (std::size_t a = 0; a < actors.actors.size(); ++a) {
    const Actor& act = actors.actors[a];
    const std::size_t b = net.bus_index(act.bus);
    SettlementRow row;
    row.actor = act.id;
    row.bus = act.bus;
    row.tier = act.tier;
    for (std::size_t t = 0; t < T; ++t) {
      const double e = actors.baseline_kw(net, a, t) * net.dt;
      row.energy_kwh += e;
      row.payment_dlmp += dlmp.price[b][t] * e;
      row.payment_adjusted += adjusted.actor[a][t] * e;
    }
    const auto k = std::size_t(act.tier);
    energy_tier[k] += row.energy_kwh;
    pay_tier[k] += row.payment_adjusted;
    pay_tier_dlmp[k] += row.payment_dlmp;
    r.total_dlmp += row.payment_dlmp;
    r.total_adjusted += row.payment_adjusted;
    if (act.tier == IncomeTier::low) r.low_income_payment_delta += row.payment_adjusted - row.payment_dlmp;
    r.rows.push_back(std::move(row));
  }
  for (int k = 0; k < 3; ++k) {
    r.mean_price_adjusted[k] = energy_tier[k] > 0.0 ? pay_tier[k] / energy_tier[k] : std::nan("");
    r.mean_price_dlmp[k] = energy_tier[k] > 0.0 ? pay_tier_dlmp[k] / energy_tier[k] : std::nan("");
  }
  r.payment_delta = r.total_adjusted - r.total_dlmp;
  r.payment_delta_rel = r.total_dlmp != 0.0 ? r.payment_delta / r.total_dlmp : 0.0;
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    const auto members = actors.at_bus(net.buses[b].id);
    if (members.empty()) continue;
    for (std::size_t t = 0; t < T; ++t) {
      double paid = 0.0, load = 0.0;
      for (std::size_t a : members) {
        const double p = actors.baseline_kw(net, a, t);
        paid += adjusted.actor[a][t] * p;
        load += p;
      }
      const double target = adjusted.bus[b][t] * load;
      r.max_bus_payment_gap =
          std::max(r.max_bus_payment_gap, std::abs(paid - target) / std::max(std::abs(target), 1e-300));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

ActorTable parse_actors(const std::string& text) {
  const auto doc = detail::parse_json(text, "actor table");
  const auto& arr = doc.is_object() && doc.contains("actors") ? doc.at("actors") : doc;
  if (!arr.is_array()) throw ParseError("actor table: expected an array of actors");
  ActorTable t;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& j = arr[i];
    const std::string where = "actors[" + std::to_string(i) + "]";
    Actor a;
    a.id = detail::required<std::string>(j, "id", where);
    a.bus = detail::required<int>(j, "bus", where);
    a.daily_income = detail::required<double>(j, "daily_income", where);
    a.share = detail::optional<double>(j, "share", 1.0, where);
    a.tier = tier_from_string(detail::optional<std::string>(j, "tier", "high", where));
    t.actors.push_back(std::move(a));
  }
  return t;
}

std::string dump_actors(const ActorTable& t) {
  std::string out = "{\"actors\": [\n";
  for (std::size_t i = 0; i < t.actors.size(); ++i) {
    const Actor& a = t.actors[i];
    nlohmann::ordered_json j;
    j["id"] = a.id;
    j["bus"] = a.bus;
    j["daily_income"] = a.daily_income;
    j["share"] = a.share;
    j["tier"] = to_string(a.tier);
    out += "  " + j.dump() + (i + 1 < t.actors.size() ? ",\n" : "\n");
  }
  return out + "]}\n";
}

}  // namespace equiflex::stage1
