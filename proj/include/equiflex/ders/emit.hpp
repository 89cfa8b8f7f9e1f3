#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equiflex/conic/program.hpp"
#include "equiflex/ders/portfolio.hpp"

namespace equiflex::ders {

using conic::ConicProgram;
using conic::VariableRef;

/// Unit conversion for emission: variables are in p.u. power (energy in
/// p.u. times hours), objective coefficients in dollars.
struct EmitContext {
  double base_kw = 1000.0;
  double dt = 1.0;
  std::size_t horizon = 24;

  [[nodiscard]] double pu(double kw) const { return kw / base_kw; }
  [[nodiscard]] double kw(double pu) const { return pu * base_kw; }
  /// Objective coefficient of a p.u. power variable held for one interval.
  [[nodiscard]] double cost(double per_kwh) const { return per_kwh * base_kw * dt; }
};

struct PvVars {
  std::vector<VariableRef> p, q;
};

struct DgVars {
  std::vector<VariableRef> p;
};

struct StorageVars {
  std::vector<VariableRef> x_ch, x_dch, p_ch, p_dch;
  std::vector<std::optional<VariableRef>> soc;  // present inside the availability window
};

struct FlexLoadVars {
  std::vector<VariableRef> up, down;  // p_FL = up - down, both in [0, p_max]
};

/// 0 <= p <= min(forecast, pf * S) and |(p, q)| <= S.
PvVars emit_pv(ConicProgram& prog, const EmitContext& ctx, const PvUnit& unit);

/// Output box and ramp limits; the first interval ramps from the unit's
/// initial output.
DgVars emit_dg(ConicProgram& prog, const EmitContext& ctx, const DgUnit& unit);

/// Charge/discharge exclusivity, power limits gated by the binaries, SoC
/// recursion and bounds, and the end-of-horizon condition SoC_T >= E0.
StorageVars emit_bess(ConicProgram& prog, const EmitContext& ctx, const StorageUnit& unit);

/// As emit_bess but plugged in only during [arrival, departure], starting from
/// energy_init_kwh and ending with at least trip_energy_kwh.
StorageVars emit_ev(ConicProgram& prog, const EmitContext& ctx, const EvUnit& unit);

/// Symmetric deviation split into nonnegative parts so the cost is charged on
/// |p_FL|.
FlexLoadVars emit_flexload(ConicProgram& prog, const EmitContext& ctx, const FlexLoad& unit);

/// Daily energy floor of a bus over fixed plus flexible consumption. Without
/// flexible loads the floor is checked directly (ValidationError if violated).
void emit_energy_floor(ConicProgram& prog, const EmitContext& ctx, int bus, std::span<const double> fixed_kw,
                       double min_energy_kwh, std::span<const FlexLoadVars* const> flex);

// ---------------------------------------------------------------------------
// Day-ahead values handed to the flexibility market (kW, kWh).

struct StorageSchedule {
  std::vector<double> p_ch_kw, p_dch_kw, x_ch, x_dch, soc_kwh;
};

struct DerSchedule {
  std::map<std::string, std::vector<double>> pv_kw, dg_kw, flex_kw;
  std::map<std::string, StorageSchedule> storage;  // BESS and EV by id
};

enum class DerKind { pv, dg, bess, ev, flexload };
std::string to_string(DerKind k);

struct FlexEnvelope {
  std::string der;
  DerKind kind = DerKind::pv;
  int bus = 0;
  std::size_t t = 0;
  std::optional<VariableRef> uf, df, y_uf, y_df;  // p.u.; PV has no upward part
  double uf_max_kw = 0.0;  // tightest bound implied by the day-ahead values
  double df_max_kw = 0.0;
};

/// Upward/downward flexibility bounds of one unit at one interval, computed
/// from day-ahead values alone.
struct FlexBounds {
  double uf_max_kw = 0.0;
  double df_max_kw = 0.0;
};
FlexBounds storage_flex_bounds(const StorageUnit& unit, const StorageSchedule& s, std::size_t t, double dt,
                               bool plugged_in);
FlexBounds dg_flex_bounds(const DgUnit& unit, double p_kw, double dt);
FlexBounds flexload_flex_bounds(double p_max_kw, double p_kw);

/// Flexibility variables for every unit and every listed interval. With
/// `enabled` false every UF/DF (and its indicator) is fixed to zero. Throws
/// ValidationError when a unit has no day-ahead value.
std::vector<FlexEnvelope> emit_flex_envelopes(ConicProgram& prog, const EmitContext& ctx,
                                              const DerPortfolio& portfolio, const DerSchedule& schedule,
                                              std::span<const std::size_t> periods, bool enabled = true);

/// Largest deviation of a stored SoC trajectory from the recursion replayed
/// from its powers (kWh). The window is the full horizon for a BESS.
double soc_replay_error(const StorageUnit& unit, const StorageSchedule& s, double dt, std::size_t first,
                        std::size_t last);

}  // namespace equiflex::ders
