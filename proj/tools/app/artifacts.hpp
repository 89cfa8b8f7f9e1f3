#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "equiflex/error.hpp"
#include "equiflex/stage1/market.hpp"
#include "equiflex/stage2/flex.hpp"

namespace equiflex::app {

/// A required input file of a later stage is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

/// Shortest text that parses back to the same double; NaN becomes empty.
std::string format_number(double v);

struct Stage1Outputs {
  stage1::DispatchResult dispatch;
  stage1::DlmpSchedule dlmp;
  stage1::BurdenTable burden;
  stage1::AdjustedPriceTable adjusted;
  stage1::SettlementReport settlement;
  std::size_t nodes = 0;
  bool proven = true;
};

/// Long format: component,id,bus,t,quantity,value. Holds every value stage 2
/// reads; numbers use the shortest round-trip form, so read_dispatch_csv
/// rebuilds the hand-off exactly (up to the sign of zero).
void write_dispatch_csv(const std::filesystem::path& path, const stage1::MarketInputs& in,
                        const stage1::DispatchResult& d);
stage1::DispatchResult read_dispatch_csv(const std::filesystem::path& path, const stage1::MarketInputs& in);

void write_dlmp_csv(const std::filesystem::path& path, const grid::NetworkCase& net, const Stage1Outputs& s);
void write_actor_prices_csv(const std::filesystem::path& path, const stage1::MarketInputs& in, const Stage1Outputs& s);

/// One stage-2 run per fairness weight.
struct Stage2Run {
  double w = 0.0;
  stage2::FlexibilityResult result;
  stage2::FairnessReport fairness;
};

void write_flex_csv(const std::filesystem::path& path, const std::vector<Stage2Run>& runs);
void write_curtailment_csv(const std::filesystem::path& path, const stage1::MarketInputs& in,
                           const std::vector<Stage2Run>& runs);
void write_fairness_csv(const std::filesystem::path& path, const grid::NetworkCase& net,
                        const std::vector<Stage2Run>& runs);

/// Minimal reader for the CSV files written above (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  [[nodiscard]] std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace equiflex::app
