#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace equiflex::ders {

// All records use kW, kWh, hours and $/kWh. Interval indices are zero-based.

struct PvUnit {
  std::string id;
  int bus = 0;
  double capacity_kva = 0.0;
  std::vector<double> forecast_kw;
  std::vector<double> power_factor_limit;
  std::string owner;
};

struct DgUnit {
  std::string id;
  int bus = 0;
  double p_min_kw = 0.0;
  double p_max_kw = 0.0;
  double ramp_up_kw_per_h = 0.0;
  double ramp_down_kw_per_h = 0.0;
  double cost_per_kwh = 0.0;
  // Output before the first interval, for the ramp limit; defaults to p_min.
  double initial_output_kw = -1.0;
  std::string owner;

  [[nodiscard]] double initial_output() const { return initial_output_kw < 0.0 ? p_min_kw : initial_output_kw; }
};

struct StorageUnit {
  std::string id;
  int bus = 0;
  double p_ch_max_kw = 0.0;
  double p_dch_max_kw = 0.0;
  double eff_ch = 1.0;
  double eff_dch = 1.0;
  double energy_init_kwh = 0.0;
  double capacity_kwh = 0.0;
  double soc_min_kwh = 0.0;
  double soc_max_kwh = 0.0;
  double cost_per_kwh = 0.0;
  std::string owner;
};

/// Storage that is plugged in during [arrival, departure] only. soc_min_kwh
/// applies inside the window; set it to 0 for the looser lower bound.
struct EvUnit : StorageUnit {
  std::size_t arrival = 0;
  std::size_t departure = 0;
  double trip_energy_kwh = 0.0;
  // energy_init_kwh is the state of charge on arrival.
};

struct FlexLoad {
  std::string id;
  int bus = 0;
  std::vector<double> p_max_kw;  // symmetric deviation bound per interval
  double cost_per_kwh = 0.0;
  std::string owner;
};

struct DerPortfolio {
  std::vector<PvUnit> pv;
  std::vector<DgUnit> dg;
  std::vector<StorageUnit> bess;
  std::vector<EvUnit> ev;
  std::vector<FlexLoad> flexload;

  [[nodiscard]] bool empty() const {
    return pv.empty() && dg.empty() && bess.empty() && ev.empty() && flexload.empty();
  }
  [[nodiscard]] std::vector<std::string> owners() const;
};

/// Check every unit against its invariants for a horizon of `horizon`
/// intervals of length dt; throws ValidationError naming the unit. Includes
/// the EV reachability check (trip energy attainable within the window).
void validate_portfolio(const DerPortfolio& portfolio, std::size_t horizon, double dt);

DerPortfolio parse_portfolio(const std::string& json_text);
DerPortfolio load_portfolio(const std::filesystem::path& path);
std::string dump_portfolio(const DerPortfolio& portfolio);

}  // namespace equiflex::ders
