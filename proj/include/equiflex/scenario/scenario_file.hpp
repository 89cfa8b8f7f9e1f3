#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "equiflex/scenario/synthesis.hpp"

namespace equiflex::scenario {

/// Every input of a run, written next to its outputs so the run can be
/// replayed without the original files or seeds.
struct ScenarioFile {
  int defaults_version = defaults::kDefaultsVersion;
  std::string case_source = "builtin:ieee33";  // where the inputs came from (informational)
  std::string portfolio_source;
  std::optional<PenetrationConfig> synthesis;  // set when the portfolio was synthesized
  std::vector<std::string> notices;

  grid::NetworkCase network;
  ders::DerPortfolio portfolio;
  stage1::ActorTable actors;
  std::vector<double> ug_price;

  double disturbance_magnitude = defaults::kDisturbanceMagnitude;
  std::uint64_t disturbance_seed = 1;
  stage2::Disturbance disturbance;

  // Market settings.
  stage1::EquityMode equity_mode = stage1::EquityMode::relief;
  stage1::NetworkMean burden_mean = stage1::NetworkMean::load_weighted;
  double w = 1.0;
  stage2::FairnessMode fairness = stage2::FairnessMode::pairwise;
  stage2::PairScale pair_scale = stage2::PairScale::sum;
  bool relax_binaries = false;

  [[nodiscard]] stage1::MarketInputs market_inputs() const { return {network, portfolio, actors, ug_price}; }
};

/// Full validation: case, portfolio, actors, price length and disturbance.
void validate_scenario(const ScenarioFile& s);

std::string dump_scenario(const ScenarioFile& s);
ScenarioFile parse_scenario(const std::string& json_text);
ScenarioFile load_scenario(const std::filesystem::path& path);
void save_scenario(const ScenarioFile& s, const std::filesystem::path& path);

}  // namespace equiflex::scenario
