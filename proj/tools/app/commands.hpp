#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include <spdlog/logger.h>

#include "artifacts.hpp"
#include "run_config.hpp"

namespace equiflex::app {

// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,           // usage errors and anything unexpected
  kExitInvalid = 2,         // malformed or invalid input, infeasible market
  kExitSolverLimit = 3,     // iteration or node limit without a usable point
  kExitMissingArtifacts = 4,
};

/// Process-wide stderr logger; level from EQUIFLEX_LOG (trace, debug, info,
/// warn, error, off; default warn).
std::shared_ptr<spdlog::logger> logger();

Stage1Outputs solve_stage1(const scenario::ScenarioFile& s, const SolveSettings& settings);

/// One stage-2 clearing per weight; `no_flex` closes every envelope.
std::vector<Stage2Run> solve_stage2(const scenario::ScenarioFile& s, const stage1::DispatchResult& dispatch,
                                    const SolveSettings& settings, const std::vector<double>& weights, bool no_flex);

void write_stage1(const std::filesystem::path& dir, const scenario::ScenarioFile& s, const Stage1Outputs& out);
void write_stage2(const std::filesystem::path& dir, const scenario::ScenarioFile& s, const std::vector<Stage2Run>& runs);

int run_stage1(const RunConfig& cfg);
/// Reads scenario.json and dispatch.csv from `stage1_dir` (the output
/// directory when empty) and writes the stage-2 files to cfg.out.
int run_stage2(const RunConfig& cfg, const std::filesystem::path& stage1_dir = {});
/// Stage 1, stage 2 at the configured weight, then the w = 0 and no-flex
/// comparison runs under out/modes and a summary.txt.
int run_pipeline(const RunConfig& cfg);
/// Finite-difference check of the DLMPs. Without --case, --portfolio or
/// --scenario it runs on the built-in 5-bus subcase.
int validate_duals(const RunConfig& cfg, std::ostream& os);
/// Plain-text summary of an output directory.
int report(const std::filesystem::path& dir, std::ostream& os);
/// Plot-ready CSVs under dir/plot: prices by income tier and curtailment by bus.
int plotdata(const std::filesystem::path& dir);

}  // namespace equiflex::app
