#include "equiflex/ders/emit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "equiflex/error.hpp"

namespace equiflex::ders {

using conic::AffineExpr;
using conic::ConeKind;
using conic::kInf;
using conic::Sense;
using conic::Term;

namespace {

std::string key(const std::string& kind, const std::string& id, const std::string& what, std::size_t t) {
  return kind + ":" + id + ":" + what + ":" + std::to_string(t);
}

}  // namespace

std::string to_string(DerKind k) {
  switch (k) {
    case DerKind::pv: return "pv";
    case DerKind::dg: return "dg";
    case DerKind::bess: return "bess";
    case DerKind::ev: return "ev";
    case DerKind::flexload: return "flexload";
  }
  return "unknown";
}

PvVars emit_pv(ConicProgram& prog, const EmitContext& ctx, const PvUnit& u) {
  PvVars v;
  const double s = ctx.pu(u.capacity_kva);
  for (std::size_t t = 0; t < ctx.horizon; ++t) {
    const double cap = std::min(ctx.pu(u.forecast_kw[t]), u.power_factor_limit[t] * s);
    v.p.push_back(prog.add_continuous(key("pv", u.id, "p", t), 0.0, cap));
    v.q.push_back(prog.add_continuous(key("pv", u.id, "q", t), -s, s));
    prog.add_cone(ConeKind::second_order, {AffineExpr(s), AffineExpr(v.p[t]), AffineExpr(v.q[t])},
                  key("pv", u.id, "apparent", t));
  }
  return v;
}

DgVars emit_dg(ConicProgram& prog, const EmitContext& ctx, const DgUnit& u) {
  DgVars v;
  const double up = ctx.pu(u.ramp_up_kw_per_h) * ctx.dt;
  const double down = ctx.pu(u.ramp_down_kw_per_h) * ctx.dt;
  for (std::size_t t = 0; t < ctx.horizon; ++t) {
    v.p.push_back(prog.add_continuous(key("dg", u.id, "p", t), ctx.pu(u.p_min_kw), ctx.pu(u.p_max_kw)));
    prog.add_objective(v.p[t], ctx.cost(u.cost_per_kwh));
    std::vector<Term> diff{{v.p[t], 1.0}};
    double offset = 0.0;
    if (t == 0) {
      offset = ctx.pu(u.initial_output());
    } else {
      diff.push_back({v.p[t - 1], -1.0});
    }
    prog.add_constraint(diff, Sense::less_equal, offset + up, key("dg", u.id, "ramp-up", t));
    prog.add_constraint(diff, Sense::greater_equal, offset - down, key("dg", u.id, "ramp-down", t));
  }
  return v;
}

namespace {

StorageVars emit_storage(ConicProgram& prog, const EmitContext& ctx, const StorageUnit& u, const char* kind,
                         std::size_t first, std::size_t last) {
  StorageVars v;
  v.soc.resize(ctx.horizon);
  const double pch = ctx.pu(u.p_ch_max_kw);
  const double pdch = ctx.pu(u.p_dch_max_kw);
  const double cost = ctx.cost(u.cost_per_kwh);
  for (std::size_t t = 0; t < ctx.horizon; ++t) {
    const bool on = t >= first && t <= last;
    const double hi = on ? 1.0 : 0.0;
    v.x_ch.push_back(prog.add_variable(key(kind, u.id, "xch", t), conic::VarKind::binary, 0.0, hi));
    v.x_dch.push_back(prog.add_variable(key(kind, u.id, "xdch", t), conic::VarKind::binary, 0.0, hi));
    v.p_ch.push_back(prog.add_continuous(key(kind, u.id, "pch", t), 0.0, on ? pch : 0.0));
    v.p_dch.push_back(prog.add_continuous(key(kind, u.id, "pdch", t), 0.0, on ? pdch : 0.0));
    prog.add_objective(v.p_ch[t], cost);
    prog.add_objective(v.p_dch[t], cost);
    prog.link_indicator(v.x_ch[t], v.p_ch[t]);
    prog.link_indicator(v.x_dch[t], v.p_dch[t]);
    if (!on) continue;
    prog.add_constraint({{v.x_ch[t], 1.0}, {v.x_dch[t], 1.0}}, Sense::less_equal, 1.0, key(kind, u.id, "excl", t));
    prog.add_constraint({{v.p_ch[t], 1.0}, {v.x_ch[t], -pch}}, Sense::less_equal, 0.0, key(kind, u.id, "chmax", t));
    prog.add_constraint({{v.p_dch[t], 1.0}, {v.x_dch[t], -pdch}}, Sense::less_equal, 0.0,
                        key(kind, u.id, "dchmax", t));
    const auto soc = prog.add_continuous(key(kind, u.id, "soc", t), ctx.pu(u.soc_min_kwh), ctx.pu(u.soc_max_kwh));
    v.soc[t] = soc;
    std::vector<Term> rec{{soc, 1.0}, {v.p_ch[t], -u.eff_ch * ctx.dt}, {v.p_dch[t], ctx.dt / u.eff_dch}};
    double rhs = 0.0;
    if (t == first) {
      rhs = ctx.pu(u.energy_init_kwh);
    } else {
      rec.push_back({*v.soc[t - 1], -1.0});
    }
    prog.add_constraint(rec, Sense::equal, rhs, key(kind, u.id, "soc-balance", t));
  }
  return v;
}

}  // namespace

StorageVars emit_bess(ConicProgram& prog, const EmitContext& ctx, const StorageUnit& u) {
  auto v = emit_storage(prog, ctx, u, "bess", 0, ctx.horizon - 1);
  prog.add_constraint({{*v.soc.back(), 1.0}}, Sense::greater_equal, ctx.pu(u.energy_init_kwh),
                      "bess:" + u.id + ":terminal");
  return v;
}

StorageVars emit_ev(ConicProgram& prog, const EmitContext& ctx, const EvUnit& u) {
  if (u.departure >= ctx.horizon || u.arrival >= u.departure) {
    throw ValidationError("ev '" + u.id + "': window [" + std::to_string(u.arrival) + ", " +
                          std::to_string(u.departure) + "] outside the horizon");
  }
  auto v = emit_storage(prog, ctx, u, "ev", u.arrival, u.departure);
  // Interior-point residuals can leave the departure state a hair under the
  // trip energy; a 1e-6 kWh margin keeps the reported value on the right side.
  // Capped by what the window can physically deliver.
  const double slots = double(u.departure - u.arrival + 1);
  const double reach = std::min(u.soc_max_kwh, u.energy_init_kwh + u.eff_ch * u.p_ch_max_kw * ctx.dt * slots);
  const double need = std::max(u.trip_energy_kwh, std::min(u.trip_energy_kwh + 1e-6, reach));
  prog.add_constraint({{*v.soc[u.departure], 1.0}}, Sense::greater_equal, ctx.pu(need), "ev:" + u.id + ":trip");
  return v;
}

FlexLoadVars emit_flexload(ConicProgram& prog, const EmitContext& ctx, const FlexLoad& u) {
  FlexLoadVars v;
  for (std::size_t t = 0; t < ctx.horizon; ++t) {
    const double hi = ctx.pu(u.p_max_kw[t]);
    v.up.push_back(prog.add_continuous(key("flexload", u.id, "up", t), 0.0, hi));
    v.down.push_back(prog.add_continuous(key("flexload", u.id, "down", t), 0.0, hi));
    prog.add_objective(v.up[t], ctx.cost(u.cost_per_kwh));
    prog.add_objective(v.down[t], ctx.cost(u.cost_per_kwh));
  }
  return v;
}

void emit_energy_floor(ConicProgram& prog, const EmitContext& ctx, int bus, std::span<const double> fixed_kw,
                       double min_energy_kwh, std::span<const FlexLoadVars* const> flex) {
  const double fixed_energy = std::accumulate(fixed_kw.begin(), fixed_kw.end(), 0.0) * ctx.dt;
  // Sum over t of (up - down) dt >= (E_min - fixed energy) in p.u. hours.
  const double rhs = ctx.pu(min_energy_kwh - fixed_energy);
  std::vector<Term> terms;
  for (const FlexLoadVars* f : flex) {
    for (std::size_t t = 0; t < ctx.horizon; ++t) {
      terms.push_back({f->up[t], ctx.dt});
      terms.push_back({f->down[t], -ctx.dt});
    }
  }
  if (terms.empty()) {
    if (rhs > 1e-9) {
      throw ValidationError("bus " + std::to_string(bus) + ": min_energy_kwh " + std::to_string(min_energy_kwh) +
                            " exceeds fixed energy " + std::to_string(fixed_energy) +
                            " and the bus has no flexible load");
    }
    return;
  }
  prog.add_constraint(std::move(terms), Sense::greater_equal, rhs, "energy-floor:bus=" + std::to_string(bus));
}

// ---------------------------------------------------------------------------

FlexBounds storage_flex_bounds(const StorageUnit& u, const StorageSchedule& s, std::size_t t, double dt,
                               bool plugged_in) {
  if (!plugged_in) return {};
  FlexBounds b;
  const double df_power = (u.p_ch_max_kw * s.x_ch[t] - s.p_ch_kw[t]) + s.p_dch_kw[t];
  const double uf_power = (u.p_dch_max_kw * s.x_dch[t] - s.p_dch_kw[t]) + s.p_ch_kw[t];
  b.df_max_kw = std::max(0.0, std::min(df_power, (u.soc_max_kwh - s.soc_kwh[t]) / dt));
  b.uf_max_kw = std::max(0.0, std::min(uf_power, (s.soc_kwh[t] - u.soc_min_kwh) / dt));
  return b;
}

FlexBounds dg_flex_bounds(const DgUnit& u, double p_kw, double dt) {
  FlexBounds b;
  b.uf_max_kw = std::max(0.0, std::min(u.p_max_kw - p_kw, u.ramp_up_kw_per_h * dt));
  b.df_max_kw = std::max(0.0, std::min(p_kw - u.p_min_kw, u.ramp_down_kw_per_h * dt));
  return b;
}

FlexBounds flexload_flex_bounds(double p_max_kw, double p_kw) {
  return {std::max(0.0, p_kw), std::max(0.0, p_max_kw - p_kw)};
}

namespace {

template <class Map>
const auto& lookup(const Map& m, const std::string& id, const char* kind) {
  auto it = m.find(id);
  if (it == m.end()) throw ValidationError(std::string(kind) + " '" + id + "': missing day-ahead schedule");
  return it->second;
}

double at(const std::vector<double>& v, std::size_t t, const std::string& what) {
  if (t >= v.size() || std::isnan(v[t])) {
    throw ValidationError(what + ": missing day-ahead value at t=" + std::to_string(t));
  }
  return v[t];
}

FlexEnvelope envelope(const std::string& id, DerKind kind, int bus, std::size_t t) {
  FlexEnvelope e;
  e.der = id;
  e.kind = kind;
  e.bus = bus;
  e.t = t;
  return e;
}

// Two-sided envelope: indicator-gated caps `uf_gate`, `df_gate` (p.u.) and
// plain caps from SoC or ramp limits.
void add_gated(ConicProgram& prog, FlexEnvelope& e, const std::string& kind, const std::string& id, std::size_t t,
               double uf_gate, double uf_cap, double df_gate, double df_cap, bool enabled) {
  const double on = enabled ? 1.0 : 0.0;
  e.y_uf = prog.add_variable(key(kind, id, "yuf", t), conic::VarKind::binary, 0.0, on);
  e.y_df = prog.add_variable(key(kind, id, "ydf", t), conic::VarKind::binary, 0.0, on);
  e.uf = prog.add_continuous(key(kind, id, "uf", t), 0.0, enabled ? std::max(0.0, uf_cap) : 0.0);
  e.df = prog.add_continuous(key(kind, id, "df", t), 0.0, enabled ? std::max(0.0, df_cap) : 0.0);
  prog.add_constraint({{*e.y_uf, 1.0}, {*e.y_df, 1.0}}, Sense::less_equal, 1.0, key(kind, id, "flex-excl", t));
  prog.add_constraint({{*e.uf, 1.0}, {*e.y_uf, -uf_gate}}, Sense::less_equal, 0.0, key(kind, id, "uf-gate", t));
  prog.add_constraint({{*e.df, 1.0}, {*e.y_df, -df_gate}}, Sense::less_equal, 0.0, key(kind, id, "df-gate", t));
  prog.link_indicator(*e.y_uf, *e.uf);
  prog.link_indicator(*e.y_df, *e.df);
}

}  // namespace

std::vector<FlexEnvelope> emit_flex_envelopes(ConicProgram& prog, const EmitContext& ctx,
                                              const DerPortfolio& portfolio, const DerSchedule& schedule,
                                              std::span<const std::size_t> periods, bool enabled) {
  std::vector<FlexEnvelope> out;
  for (std::size_t t : periods) {
    for (const auto& u : portfolio.pv) {
      const double p = at(lookup(schedule.pv_kw, u.id, "pv"), t, "pv '" + u.id + "'");
      FlexEnvelope e = envelope(u.id, DerKind::pv, u.bus, t);
      e.df_max_kw = std::max(0.0, p);
      e.df = prog.add_continuous(key("pv", u.id, "df", t), 0.0, enabled ? ctx.pu(e.df_max_kw) : 0.0);
      out.push_back(std::move(e));
    }
    for (const auto& u : portfolio.dg) {
      const double p = at(lookup(schedule.dg_kw, u.id, "dg"), t, "dg '" + u.id + "'");
      FlexEnvelope e = envelope(u.id, DerKind::dg, u.bus, t);
      const auto b = dg_flex_bounds(u, p, ctx.dt);
      e.uf_max_kw = b.uf_max_kw;
      e.df_max_kw = b.df_max_kw;
      add_gated(prog, e, "dg", u.id, t, ctx.pu(u.p_max_kw - p), ctx.pu(u.ramp_up_kw_per_h * ctx.dt),
                ctx.pu(p - u.p_min_kw), ctx.pu(u.ramp_down_kw_per_h * ctx.dt), enabled);
      out.push_back(std::move(e));
    }
    auto storage = [&](const StorageUnit& u, DerKind kind, bool plugged) {
      const auto& s = lookup(schedule.storage, u.id, to_string(kind).c_str());
      const std::string name = to_string(kind) + " '" + u.id + "'";
      FlexEnvelope e = envelope(u.id, kind, u.bus, t);
      if (!plugged) {
        // Parked elsewhere: both indicators and both directions are zero.
        add_gated(prog, e, to_string(kind), u.id, t, 0.0, 0.0, 0.0, 0.0, false);
        out.push_back(std::move(e));
        return;
      }
      const double pch = at(s.p_ch_kw, t, name), pdch = at(s.p_dch_kw, t, name);
      const double xch = at(s.x_ch, t, name), xdch = at(s.x_dch, t, name);
      const double soc = at(s.soc_kwh, t, name);
      const auto b = storage_flex_bounds(u, s, t, ctx.dt, true);
      e.uf_max_kw = b.uf_max_kw;
      e.df_max_kw = b.df_max_kw;
      add_gated(prog, e, to_string(kind), u.id, t, ctx.pu((u.p_dch_max_kw * xdch - pdch) + pch),
                ctx.pu((soc - u.soc_min_kwh) / ctx.dt), ctx.pu((u.p_ch_max_kw * xch - pch) + pdch),
                ctx.pu((u.soc_max_kwh - soc) / ctx.dt), enabled);
      out.push_back(std::move(e));
    };
    for (const auto& u : portfolio.bess) storage(u, DerKind::bess, true);
    for (const auto& u : portfolio.ev) storage(u, DerKind::ev, t >= u.arrival && t <= u.departure);
    for (const auto& u : portfolio.flexload) {
      const double p = at(lookup(schedule.flex_kw, u.id, "flexload"), t, "flexload '" + u.id + "'");
      FlexEnvelope e = envelope(u.id, DerKind::flexload, u.bus, t);
      const auto b = flexload_flex_bounds(u.p_max_kw[t], p);
      e.uf_max_kw = b.uf_max_kw;
      e.df_max_kw = b.df_max_kw;
      add_gated(prog, e, "flexload", u.id, t, ctx.pu(p), kInf, ctx.pu(u.p_max_kw[t] - p), kInf, enabled);
      out.push_back(std::move(e));
    }
  }
  return out;
}

double soc_replay_error(const StorageUnit& u, const StorageSchedule& s, double dt, std::size_t first,
                        std::size_t last) {
  double err = 0.0;
  double soc = u.energy_init_kwh;
  for (std::size_t t = first; t <= last; ++t) {
    soc += (u.eff_ch * s.p_ch_kw[t] - s.p_dch_kw[t] / u.eff_dch) * dt;
    err = std::max(err, std::abs(soc - s.soc_kwh[t]));
  }
  return err;
}

}  // namespace equiflex::ders
