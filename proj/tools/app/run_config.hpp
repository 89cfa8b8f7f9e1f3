#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "equiflex/scenario/scenario_file.hpp"

namespace equiflex::app {

/// Every option of a run. Unset optionals fall back to the scenario file (when
/// one is given) and then to the built-in defaults.
struct RunConfig {
  std::optional<std::string> scenario;  // replay file; excludes case/portfolio/prices/actors
  std::optional<std::string> case_source;       // path or builtin:ieee33
  std::optional<std::string> portfolio_source;  // path or synth:<seed>
  std::optional<std::string> prices;            // path
  std::optional<std::string> actors;            // path
  std::optional<std::string> disturbance;       // "MAG[@T,...]" or path
  std::optional<std::vector<double>> w;         // several values sweep stage 2
  std::optional<std::uint64_t> seed;
  std::optional<std::string> equity_mode;
  std::optional<std::string> fairness;
  std::optional<std::string> pair_scale;
  std::optional<bool> relax_binaries;
  std::optional<bool> no_flex;
  std::optional<bool> serial;
  std::optional<bool> multi_actor;
  std::optional<double> abs_gap, rel_gap, feasibility;
  std::optional<std::size_t> node_limit;
  std::filesystem::path out = "out";

  /// Fill every option still unset from `file` (flags win).
  void merge_defaults_from(const RunConfig& file);
};

/// Config file: a JSON object with the long flag names as keys
/// (case, portfolio, prices, actors, disturbance, w, seed, equity-mode,
/// fairness, pair-scale, relax-binaries, no-flex, serial, multi-actor,
/// abs-gap, rel-gap, feasibility, node-limit, out, scenario).
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<double> parse_weight_list(const std::string& text);

/// Assemble the full set of inputs from the options. Stage-2 settings given on
/// the command line override those stored in a replayed scenario.
scenario::ScenarioFile build_scenario(const RunConfig& cfg);

/// Read an upstream price profile: a JSON array, a JSON object with
/// "ug_price", or plain numbers separated by commas or whitespace.
std::vector<double> load_prices(const std::filesystem::path& path);

/// "MAG" or "MAG@T1,T2,..." for a seeded random step, or a JSON file with
/// "periods" and "delta_kw": [{"bus", "values"}].
struct DisturbanceSpec {
  double magnitude = 0.0;
  std::vector<std::size_t> periods;
  std::optional<std::filesystem::path> file;
};
DisturbanceSpec parse_disturbance_spec(const std::string& text);

struct SolveSettings {
  stage1::ClearOptions clear;
  stage2::FlexOptions flex;
};
SolveSettings solve_settings(const RunConfig& cfg, const scenario::ScenarioFile& s);

}  // namespace equiflex::app
