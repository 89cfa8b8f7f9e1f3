#include "equiflex/scenario/oracles.hpp"

#include <algorithm>
#include <future>
#include <string>
#include <thread>

#include "equiflex/error.hpp"
#include "equiflex/scenario/rng.hpp"

namespace equiflex::scenario {

using namespace conic;

OracleResult enumerate_oracle(const ConicProgram& program, const Tolerances& tol, bool parallel) {
  const auto bins = program.binaries();
  if (bins.size() > kMaxEnumeratedBinaries) {
    throw ModelError("enumeration supports at most " + std::to_string(kMaxEnumeratedBinaries) +
                     " binaries, program has " + std::to_string(bins.size()));
  }
  const std::size_t count = std::size_t{1} << bins.size();
  std::vector<ConicSolution> sols(count);
  auto assignment = [&](std::size_t mask) {
    Assignment a;
    for (std::size_t i = 0; i < bins.size(); ++i) a.emplace_back(bins[i], double((mask >> i) & 1));
    return a;
  };
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t m = begin; m < count; m += stride) {
      sols[m] = solve_relaxation(program.with_fixed_binaries(assignment(m)), tol);
    }
  };
  const std::size_t workers =
      parallel ? std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, count) : 1;
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 1; w < workers; ++w) jobs.push_back(std::async(std::launch::async, run, w, workers));
  run(0, workers);
  for (auto& j : jobs) j.get();

  OracleResult out;
  out.candidates = count;
  for (std::size_t m = 0; m < count; ++m) {
    if (!sols[m].optimal()) continue;
    if (!out.feasible || sols[m].objective_value < out.best_objective) {
      out.feasible = true;
      out.best_objective = sols[m].objective_value;
      out.best_assignment = assignment(m);
      out.best_solution = sols[m];
    }
  }
  return out;
}

ConicProgram random_mixed_program(std::uint64_t seed, std::size_t binaries) {
  Rng rng(seed);
  ConicProgram p;
  std::vector<VariableRef> on, y;
  double capacity = 0.0;
  for (std::size_t i = 0; i < binaries; ++i) {
    const std::string k = std::to_string(i);
    on.push_back(p.add_binary("on" + k));
    y.push_back(p.add_continuous("y" + k, 0.0, kInf));
    const double lo = rng.uniform(0.5, 2.0);
    const double hi = lo + rng.uniform(1.0, 4.0);
    capacity += hi;
    // lo * on <= y <= hi * on
    p.add_constraint({{y[i], 1.0}, {on[i], -hi}}, Sense::less_equal, 0.0, "cap" + k);
    p.add_constraint({{y[i], 1.0}, {on[i], -lo}}, Sense::greater_equal, 0.0, "min" + k);
    p.add_objective(on[i], rng.uniform(0.5, 3.0));
    p.add_objective(y[i], rng.uniform(0.2, 1.5));
    p.link_indicator(on[i], y[i]);
  }
  if (binaries == 0) return p;
  std::vector<Term> demand;
  for (auto v : y) demand.push_back({v, 1.0});
  p.add_constraint(demand, Sense::greater_equal, rng.uniform(0.2, 0.6) * capacity, "demand");
  // Penalty t >= |(y0 - y1, y_last - 1)| keeps the relaxation nonlinear.
  if (binaries >= 2) {
    auto t = p.add_continuous("t", 0.0, kInf);
    p.add_objective(t, rng.uniform(0.1, 1.0));
    p.add_cone(ConeKind::second_order,
               {AffineExpr(t), AffineExpr(y[0]).add(y[1], -1.0), AffineExpr(-1.0).add(y.back(), 1.0)},
               "penalty");
  }
  return p;
}

}  // namespace equiflex::scenario
