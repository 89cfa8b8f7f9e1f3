#include "equiflex/scenario/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "equiflex/error.hpp"
#include "equiflex/scenario/rng.hpp"

namespace equiflex::scenario {

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double round_to(double v, double q) { return std::round(v / q) * q; }

// Weights in [0.8, 1.2], normalized to sum to one.
std::vector<double> jittered_split(Rng& rng, int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& x : w) x = rng.uniform(0.8, 1.2);
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= s;
  return w;
}

template <class T>
void shuffle(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

void validate_config(const PenetrationConfig& c) {
  auto frac = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
  };
  frac(c.dg_bess_fraction, "dg_bess_fraction");
  frac(c.flexible_load_fraction, "flexible_load_fraction");
  frac(c.ev_actor_fraction, "ev_actor_fraction");
  frac(c.pv_fraction, "pv_fraction");
  if (!(c.substation_fraction >= 0.0) || !std::isfinite(c.substation_fraction)) {
    throw ValidationError("substation_fraction must be finite and >= 0");
  }
}

IncomeTierMap assign_income_tiers(const grid::NetworkCase& net, const std::optional<std::map<int, IncomeTier>>& custom) {
  IncomeTierMap m;
  std::vector<int> load_buses;
  for (const auto& b : net.buses) {
    if (b.kind == grid::BusKind::load) load_buses.push_back(b.id);
  }
  if (custom) {
    for (int id : load_buses) {
      auto it = custom->find(id);
      if (it == custom->end()) throw ValidationError("income tier map has no entry for bus " + std::to_string(id));
      m.tier[id] = it->second;
    }
    return m;
  }
  auto in = [](int b, int lo, int hi) { return b >= lo && b <= hi; };
  for (int id : load_buses) {
    IncomeTier t = IncomeTier::high;
    if (in(id, 2, 5) || in(id, 14, 19) || in(id, 28, 33)) {
      t = IncomeTier::low;
    } else if (in(id, 6, 10) || in(id, 19, 23)) {
      t = IncomeTier::medium;
    }
    m.tier[id] = t;
  }
  if (m.tier.count(19)) {
    m.notices.push_back("bus 19 appears in both the low (14-19) and medium (19-23) ranges; assigned low");
  }
  return m;
}

std::vector<double> default_ug_price() {
  return {defaults::kUpstreamPrice.begin(), defaults::kUpstreamPrice.end()};
}

SynthesizedScenario synthesize_portfolio(const grid::NetworkCase& net, const PenetrationConfig& cfg,
                                         const IncomeTierMap& tiers) {
  validate_config(cfg);
  Rng rng(cfg.seed);
  SynthesizedScenario out;
  const std::size_t T = net.horizon;

  std::vector<int> load_buses;
  for (const auto& b : net.buses) {
    if (b.kind == grid::BusKind::load) load_buses.push_back(b.id);
  }

  // Actors.
  std::map<int, std::string> first_actor;
  for (int id : load_buses) {
    const auto& bus = net.buses[net.bus_index(id)];
    const auto it = tiers.tier.find(id);
    if (it == tiers.tier.end()) throw ValidationError("no income tier for bus " + std::to_string(id));
    const double rate = tiers.income_per_kw[std::size_t(it->second)];
    const double avg_kw = mean(bus.fixed_load_kw);
    std::vector<double> shares{1.0};
    if (cfg.multi_actor) {
      shares = jittered_split(rng, 2 + int(rng.below(3)));
      // Exact sum of one after rounding: the last share takes the remainder.
      double acc = 0.0;
      for (std::size_t k = 0; k + 1 < shares.size(); ++k) acc += shares[k] = round_to(shares[k], 1e-6);
      shares.back() = 1.0 - acc;
    }
    for (std::size_t k = 0; k < shares.size(); ++k) {
      stage1::Actor a;
      a.id = "a" + std::to_string(id) + (shares.size() > 1 ? "-" + std::to_string(k + 1) : "");
      a.bus = id;
      a.share = shares[k];
      a.tier = it->second;
      // Income scales with household size; a small jitter separates actors at a bus.
      const double jitter = shares.size() > 1 ? rng.uniform(0.7, 1.3) : 1.0;
      a.daily_income = std::max(1e-6, round_to(rate * avg_kw * a.share * jitter, 1e-6));
      if (k == 0) first_actor[id] = a.id;
      out.actors.actors.push_back(std::move(a));
    }
  }

  // Placement on lateral ends when the case has them, else any load bus.
  std::vector<int> candidates;
  for (int b : defaults::kDerCandidateBuses) {
    if (std::find(load_buses.begin(), load_buses.end(), b) != load_buses.end()) candidates.push_back(b);
  }
  if (candidates.size() < std::size_t(defaults::kDgUnits + defaults::kBessUnits + defaults::kPvUnits)) {
    candidates = load_buses;
  }
  shuffle(rng, candidates);
  std::size_t next = 0;
  auto take_bus = [&]() { return candidates[next++ % candidates.size()]; };

  const double peak = net.peak_load_kw();
  const double dg_total = cfg.dg_bess_fraction * peak * defaults::kDgShare;
  const double bess_total = cfg.dg_bess_fraction * peak - dg_total;
  if (dg_total > 0.0) {
    const auto w = jittered_split(rng, defaults::kDgUnits);
    for (int i = 0; i < defaults::kDgUnits; ++i) {
      ders::DgUnit u;
      u.id = "dg" + std::to_string(i + 1);
      u.bus = take_bus();
      u.p_max_kw = round_to(dg_total * w[std::size_t(i)], 1e-3);
      u.p_min_kw = defaults::kDgMinFraction * u.p_max_kw;
      u.ramp_up_kw_per_h = u.ramp_down_kw_per_h = defaults::kDgRampPerHour * u.p_max_kw;
      u.cost_per_kwh = defaults::kDgCost;
      u.initial_output_kw = u.p_min_kw;
      u.owner = first_actor[u.bus];
      out.portfolio.dg.push_back(u);
    }
  }
  if (bess_total > 0.0) {
    const auto w = jittered_split(rng, defaults::kBessUnits);
    for (int i = 0; i < defaults::kBessUnits; ++i) {
      ders::StorageUnit u;
      u.id = "bess" + std::to_string(i + 1);
      u.bus = take_bus();
      u.p_ch_max_kw = u.p_dch_max_kw = round_to(bess_total * w[std::size_t(i)], 1e-3);
      u.eff_ch = u.eff_dch = defaults::kBessEfficiency;
      u.capacity_kwh = defaults::kBessHours * u.p_ch_max_kw;
      u.soc_min_kwh = defaults::kBessSocMin * u.capacity_kwh;
      u.soc_max_kwh = defaults::kBessSocMax * u.capacity_kwh;
      u.energy_init_kwh = defaults::kBessSocInit * u.capacity_kwh;
      u.cost_per_kwh = defaults::kBessCost;
      u.owner = first_actor[u.bus];
      out.portfolio.bess.push_back(u);
    }
  }
  if (cfg.pv_fraction > 0.0) {
    const auto w = jittered_split(rng, defaults::kPvUnits);
    for (int i = 0; i < defaults::kPvUnits; ++i) {
      ders::PvUnit u;
      u.id = "pv" + std::to_string(i + 1);
      u.bus = take_bus();
      u.capacity_kva = round_to(cfg.pv_fraction * peak * w[std::size_t(i)], 1e-3);
      for (std::size_t t = 0; t < T; ++t) {
        u.forecast_kw.push_back(round_to(defaults::kPvShape[t % 24] * u.capacity_kva, 1e-6));
      }
      u.power_factor_limit.assign(T, defaults::kPvPowerFactorLimit);
      u.owner = first_actor[u.bus];
      out.portfolio.pv.push_back(u);
    }
  }
  if (cfg.flexible_load_fraction > 0.0) {
    for (int id : load_buses) {
      const auto& bus = net.buses[net.bus_index(id)];
      ders::FlexLoad f;
      f.id = "fl" + std::to_string(id);
      f.bus = id;
      for (double p : bus.fixed_load_kw) f.p_max_kw.push_back(round_to(cfg.flexible_load_fraction * p, 1e-6));
      f.cost_per_kwh = defaults::kFlexCost;
      f.owner = first_actor[id];
      out.portfolio.flexload.push_back(std::move(f));
    }
  }
  const auto n_ev = std::size_t(std::llround(cfg.ev_actor_fraction * double(out.actors.actors.size())));
  if (n_ev > 0 && T >= std::size_t(defaults::kEvDeparture) + 1) {
    std::vector<std::size_t> order(out.actors.actors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(rng, order);
    order.resize(n_ev);
    std::sort(order.begin(), order.end());
    int k = 0;
    for (std::size_t a : order) {
      ders::EvUnit e;
      e.id = "ev" + std::to_string(++k);
      e.bus = out.actors.actors[a].bus;
      e.owner = out.actors.actors[a].id;
      e.p_ch_max_kw = e.p_dch_max_kw = defaults::kEvChargerKw;
      e.eff_ch = e.eff_dch = defaults::kEvEfficiency;
      e.capacity_kwh = defaults::kEvCapacityKwh;
      e.soc_min_kwh = defaults::kEvSocMinKwh;
      e.soc_max_kwh = defaults::kEvSocMaxKwh;
      e.energy_init_kwh = defaults::kEvSocInitKwh;
      e.trip_energy_kwh = defaults::kEvTripKwh;
      e.cost_per_kwh = defaults::kEvCost;
      e.arrival = std::size_t(defaults::kEvArrivals[rng.below(defaults::kEvArrivals.size())]);
      e.departure = std::size_t(defaults::kEvDeparture);
      out.portfolio.ev.push_back(e);
    }
  }
  ders::validate_portfolio(out.portfolio, T, net.dt);
  out.network = net;
  if (cfg.substation_fraction > 0.0) {
    out.network.pcc_import_max_kw = std::min(net.pcc_import_max_kw, round_to(cfg.substation_fraction * peak, 1e-3));
  }
  return out;
}

stage2::Disturbance gen_disturbance(const grid::NetworkCase& net, double magnitude, std::uint64_t seed,
                                    std::vector<std::size_t> periods) {
  if (!(magnitude >= -1.0) || !std::isfinite(magnitude)) throw ValidationError("disturbance magnitude must be >= -1");
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  auto d = stage2::zero_disturbance(net, periods);
  if (magnitude == 0.0) return d;
  Rng rng(seed);
  const std::size_t nb = net.buses.size();
  for (std::size_t t : periods) {
    if (t >= net.horizon) throw ValidationError("disturbance interval outside the horizon");
    std::vector<double> raw(nb, 0.0);
    double total = 0.0, drawn = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const double p = net.buses[b].fixed_load_kw[t];
      const double u = 2.0 * rng.uniform();
      raw[b] = u * p;
      total += p;
      drawn += raw[b];
    }
    const double target = magnitude * total;
    bool proportional = !(drawn > 0.0);
    if (!proportional) {
      for (std::size_t b = 0; b < nb; ++b) {
        const double delta = raw[b] * target / drawn;
        if (net.buses[b].fixed_load_kw[t] + delta < 0.0) proportional = true;
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const double p = net.buses[b].fixed_load_kw[t];
      d.delta_kw[b][t] = proportional ? magnitude * p : raw[b] * target / drawn;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

std::optional<grid::PowerFlowState> exact_power_flow(const grid::NetworkCase& net, const std::vector<double>& p_load,
                                                     const std::vector<double>& q_load, double v_root) {
  const auto topo = grid::validate_topology(net);
  if (!topo.radial || !topo.connected) throw ValidationError("exact power flow needs a connected radial case");
  const std::size_t nb = net.buses.size(), nl = net.lines.size();
  std::vector<double> v(nb, v_root * v_root), p(nl, 0.0), q(nl, 0.0), l(nl, 0.0);
  double change = 1.0;
  for (int it = 0; it < 500 && change > 1e-15; ++it) {
    change = 0.0;
    for (auto i = topo.order.rbegin(); i != topo.order.rend(); ++i) {
      const std::size_t c = *i;
      if (topo.parent_line[c] < 0) continue;
      const auto k = std::size_t(topo.parent_line[c]);
      double pc = p_load[c], qc = q_load[c];
      for (std::size_t g : topo.children[c]) {
        pc += p[std::size_t(topo.parent_line[g])];
        qc += q[std::size_t(topo.parent_line[g])];
      }
      const double np = pc + net.r_pu(k) * l[k], nq = qc + net.x_pu(k) * l[k];
      const double nl_sq = (np * np + nq * nq) / v[std::size_t(topo.parent[c])];
      change = std::max({change, std::abs(np - p[k]), std::abs(nq - q[k]), std::abs(nl_sq - l[k])});
      p[k] = np;
      q[k] = nq;
      l[k] = nl_sq;
    }
    for (std::size_t c : topo.order) {
      if (topo.parent_line[c] < 0) continue;
      const auto k = std::size_t(topo.parent_line[c]);
      const double r = net.r_pu(k), x = net.x_pu(k);
      const double nv = v[std::size_t(topo.parent[c])] - 2.0 * (r * p[k] + x * q[k]) + (r * r + x * x) * l[k];
      if (!(nv > 0.0) || !std::isfinite(nv)) return std::nullopt;
      change = std::max(change, std::abs(nv - v[c]));
      v[c] = nv;
    }
  }
  if (change > 1e-12) return std::nullopt;
  grid::PowerFlowState s;
  for (std::size_t b = 0; b < nb; ++b) s.v_sq.push_back({v[b]});
  for (std::size_t k = 0; k < nl; ++k) {
    s.p_flow.push_back({p[k]});
    s.q_flow.push_back({q[k]});
    s.i_sq.push_back({l[k]});
  }
  return s;
}

GridSearchResult grid_search_oracle(const grid::NetworkCase& net, const std::vector<ders::DgUnit>& dgs,
                                    double ug_price, double step_kw) {
  if (net.buses.size() > 3) throw ValidationError("grid search supports at most three buses");
  if (dgs.size() > 4) throw ValidationError("grid search supports at most four dispatch variables");
  if (!(step_kw > 0.0)) throw ValidationError("grid step must be positive");
  const auto pcc = net.pcc_indices();
  if (pcc.size() != 1) throw ValidationError("grid search needs exactly one PCC bus");
  const auto& root = net.buses[pcc[0]];
  if (root.v_min != root.v_max) throw ValidationError("grid search needs a pinned PCC voltage");
  const auto topo = grid::validate_case(net);
  if (topo.root != pcc[0]) throw ValidationError("grid search needs the PCC at the root");

  const double base = net.base.power_kw();
  std::vector<std::vector<double>> levels;
  for (const auto& u : dgs) {
    const double lo = std::max(u.p_min_kw, u.initial_output() - u.ramp_down_kw_per_h * net.dt);
    const double hi = std::min(u.p_max_kw, u.initial_output() + u.ramp_up_kw_per_h * net.dt);
    std::vector<double> lv;
    for (double p = lo; p < hi; p += step_kw) lv.push_back(p);
    lv.push_back(hi);
    levels.push_back(std::move(lv));
  }

  GridSearchResult best;
  std::vector<std::size_t> idx(dgs.size(), 0);
  const double imax = net.pcc_import_max_kw / base;
  const double tol = 1e-9;
  while (true) {
    ++best.candidates;
    std::vector<double> p_load(net.buses.size()), q_load(net.buses.size());
    for (std::size_t b = 0; b < net.buses.size(); ++b) {
      p_load[b] = net.load_pu(b, 0);
      q_load[b] = net.reactive_load_pu(b, 0);
    }
    double cost = 0.0;
    std::vector<double> out(dgs.size());
    for (std::size_t i = 0; i < dgs.size(); ++i) {
      out[i] = levels[i][idx[i]];
      p_load[net.bus_index(dgs[i].bus)] -= out[i] / base;
      cost += dgs[i].cost_per_kwh * out[i] * net.dt;
    }
    const auto pf = exact_power_flow(net, p_load, q_load, root.v_max);
    if (pf) {
      bool ok = true;
      for (std::size_t b = 0; b < net.buses.size() && ok; ++b) {
        const double v = pf->v_sq[b][0];
        ok = v >= net.buses[b].v_min * net.buses[b].v_min - tol && v <= net.buses[b].v_max * net.buses[b].v_max + tol;
      }
      for (std::size_t k = 0; k < net.lines.size() && ok; ++k) {
        ok = std::hypot(pf->p_flow[k][0], pf->q_flow[k][0]) <= net.s_max_pu(k) + tol;
      }
      double import = p_load[pcc[0]];
      for (std::size_t c : topo.children[pcc[0]]) import += pf->p_flow[std::size_t(topo.parent_line[c])][0];
      ok = ok && std::abs(import) <= imax + tol;
      cost += ug_price * import * base * net.dt;
      if (ok && cost < best.best_cost) {
        best.feasible = true;
        best.best_cost = cost;
        best.dg_kw = out;
        best.import_kw = import * base;
      }
    }
    std::size_t i = 0;
    for (; i < idx.size(); ++i) {
      if (++idx[i] < levels[i].size()) break;
      idx[i] = 0;
    }
    if (i == idx.size()) break;
  }
  return best;
}

}  // namespace equiflex::scenario

namespace equiflex::scenario {

SynthesizedScenario dual_check_case() {
  auto net = grid::extract_subcase(grid::builtin_ieee33(), {1, 2, 3, 4, 5});
  PenetrationConfig cfg;
  cfg.dg_bess_fraction = cfg.flexible_load_fraction = cfg.ev_actor_fraction = cfg.pv_fraction = 0.0;
  cfg.substation_fraction = 0.0;
  auto s = synthesize_portfolio(net, cfg, assign_income_tiers(net));
  ders::DgUnit dg;
  dg.id = "dg4";
  dg.bus = 4;
  dg.p_max_kw = 150.0;
  dg.ramp_up_kw_per_h = dg.ramp_down_kw_per_h = 150.0;
  dg.cost_per_kwh = 0.15;
  dg.owner = s.actors.actors.front().id;
  s.portfolio.dg.push_back(dg);
  ders::validate_portfolio(s.portfolio, s.network.horizon, s.network.dt);
  return s;
}

}  // namespace equiflex::scenario
