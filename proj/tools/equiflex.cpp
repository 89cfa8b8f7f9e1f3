#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "app/commands.hpp"
#include "equiflex/error.hpp"

namespace {

using namespace equiflex;
using namespace equiflex::app;

// Raw option values shared by every subcommand; only the parsed ones are
// copied into the RunConfig.
struct Flags {
  std::string config, scenario, case_source, portfolio, prices, actors, disturbance, w, equity_mode, fairness,
      pair_scale, out, stage1;
  std::uint64_t seed = 0;
  double abs_gap = 0, rel_gap = 0, feasibility = 0;
  std::size_t node_limit = 0;
  bool serial = false, no_flex = false, relax_binaries = false, multi_actor = false;
};

struct Options {
  CLI::Option *config, *scenario, *case_source, *portfolio, *prices, *actors, *disturbance, *w, *equity_mode,
      *fairness, *pair_scale, *out, *seed, *abs_gap, *rel_gap, *feasibility, *node_limit, *serial, *no_flex,
      *relax_binaries, *multi_actor;
};

void add_inputs(CLI::App* sub, Flags& f, Options& o) {
  o.config = sub->add_option("--config", f.config, "JSON file with default values for any flag (flags win)");
  o.scenario = sub->add_option("--scenario", f.scenario, "replay every input from a scenario.json");
  o.case_source = sub->add_option("--case", f.case_source, "case file or builtin:ieee33");
  o.portfolio = sub->add_option("--portfolio", f.portfolio, "portfolio file or synth:<seed>");
  o.prices = sub->add_option("--prices", f.prices, "upstream price profile ($/kWh per interval)");
  o.actors = sub->add_option("--actors", f.actors, "actor table (JSON)");
  o.disturbance = sub->add_option("--disturbance", f.disturbance, "MAG[@T,...] for a seeded random step, or a file");
  o.w = sub->add_option("--w", f.w, "fairness weight, or a comma list to sweep stage 2");
  o.seed = sub->add_option("--seed", f.seed, "seed for synthesis and the disturbance");
  o.out = sub->add_option("--out", f.out, "output directory (default: out)");
  o.serial = sub->add_flag("--serial", f.serial, "single-threaded branch-and-bound");
  o.no_flex = sub->add_flag("--no-flex", f.no_flex, "close every flexibility envelope in stage 2");
  o.relax_binaries = sub->add_flag("--relax-binaries", f.relax_binaries, "solve the continuous relaxation only");
  o.multi_actor = sub->add_flag("--multi-actor", f.multi_actor, "split each synthesized bus load among 2-4 actors");
  o.equity_mode = sub->add_option("--equity-mode", f.equity_mode, "relief or proportional");
  o.fairness = sub->add_option("--fairness", f.fairness, "pairwise or max-min");
  o.pair_scale = sub->add_option("--pair-scale", f.pair_scale, "sum or mean (pairwise fairness)");
  o.abs_gap = sub->add_option("--abs-gap", f.abs_gap, "branch-and-bound absolute gap");
  o.rel_gap = sub->add_option("--rel-gap", f.rel_gap, "branch-and-bound relative gap");
  o.feasibility = sub->add_option("--feasibility", f.feasibility, "interior-point feasibility tolerance");
  o.node_limit = sub->add_option("--node-limit", f.node_limit, "branch-and-bound node limit");
}

RunConfig to_config(const Flags& f, const Options& o) {
  RunConfig c;
  if (o.scenario->count()) c.scenario = f.scenario;
  if (o.case_source->count()) c.case_source = f.case_source;
  if (o.portfolio->count()) c.portfolio_source = f.portfolio;
  if (o.prices->count()) c.prices = f.prices;
  if (o.actors->count()) c.actors = f.actors;
  if (o.disturbance->count()) c.disturbance = f.disturbance;
  if (o.w->count()) c.w = parse_weight_list(f.w);
  if (o.seed->count()) c.seed = f.seed;
  if (o.equity_mode->count()) c.equity_mode = f.equity_mode;
  if (o.fairness->count()) c.fairness = f.fairness;
  if (o.pair_scale->count()) c.pair_scale = f.pair_scale;
  if (o.relax_binaries->count()) c.relax_binaries = true;
  if (o.no_flex->count()) c.no_flex = true;
  if (o.serial->count()) c.serial = true;
  if (o.multi_actor->count()) c.multi_actor = true;
  if (o.abs_gap->count()) c.abs_gap = f.abs_gap;
  if (o.rel_gap->count()) c.rel_gap = f.rel_gap;
  if (o.feasibility->count()) c.feasibility = f.feasibility;
  if (o.node_limit->count()) c.node_limit = f.node_limit;
  if (o.config->count()) {
    const auto file = load_run_config(f.config);
    c.merge_defaults_from(file);
    if (!o.out->count()) c.out = file.out;
  }
  if (o.out->count()) c.out = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage local energy and flexibility market clearing on radial feeders."};
  app.require_subcommand(1);
  Flags f;

  Options o1, o2, op, od;
  auto* s1 = app.add_subcommand("run-stage1", "clear the day-ahead energy market");
  add_inputs(s1, f, o1);
  auto* s2 = app.add_subcommand("run-stage2", "clear the real-time flexibility market from stage-1 artifacts");
  add_inputs(s2, f, o2);
  s2->add_option("--stage1", f.stage1, "directory holding the stage-1 artifacts (default: --out)");
  auto* sp = app.add_subcommand("run-pipeline", "both stages plus the min-curtail and no-flex comparison runs");
  add_inputs(sp, f, op);
  auto* sd = app.add_subcommand("validate-duals", "finite-difference check of the DLMPs");
  add_inputs(sd, f, od);
  std::string dir = "out";
  auto* sr = app.add_subcommand("report", "plain-text summary of an output directory");
  sr->add_option("--out", dir, "output directory to summarize");
  auto* sg = app.add_subcommand("plotdata", "plot-ready CSVs under <out>/plot");
  sg->add_option("--out", dir, "output directory to read");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitOther;
  }

  try {
    if (s1->parsed()) return run_stage1(to_config(f, o1));
    if (s2->parsed()) return run_stage2(to_config(f, o2), f.stage1);
    if (sp->parsed()) {
      const auto cfg = to_config(f, op);
      const int rc = run_pipeline(cfg);
      std::ifstream summary(cfg.out / "summary.txt");
      std::cout << summary.rdbuf();
      return rc;
    }
    if (sd->parsed()) return validate_duals(to_config(f, od), std::cout);
    if (sr->parsed()) return report(dir, std::cout);
    if (sg->parsed()) return plotdata(dir);
  } catch (const MissingArtifactError& e) {
    std::cerr << "equiflex: error: " << e.what() << '\n';
    return kExitMissingArtifacts;
  } catch (const SolverLimitError& e) {
    std::cerr << "equiflex: solver limit: " << e.what() << '\n';
    return kExitSolverLimit;
  } catch (const InfeasibleError& e) {
    std::cerr << "equiflex: infeasible: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "equiflex: invalid input: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ParseError& e) {
    std::cerr << "equiflex: invalid input: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "equiflex: error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
