#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "equiflex/conic/program.hpp"
#include "equiflex/conic/solver.hpp"

namespace equiflex::conic {

using Assignment = std::vector<std::pair<VariableRef, double>>;

struct BnbOptions {
  std::size_t node_limit = 5000;
  // Evaluate the two children of a node on separate threads. The merge order
  // is fixed, so the report is identical to the serial one.
  bool parallel = true;
};

enum class BnbStatus { optimal, infeasible, node_limit, solver_failure };

std::string to_string(BnbStatus s);

struct BnbReport {
  BnbStatus status = BnbStatus::solver_failure;
  ConicSolution incumbent;  // valid when has_incumbent
  bool has_incumbent = false;
  bool proven = false;  // true when the search closed without hitting a limit
  std::size_t nodes_explored = 0;
  double best_bound = -kInf;
  Assignment fixed_binaries;  // incumbent value of every binary, by id
};

/// Best-first branch-and-bound over the program's binaries. Branches on the
/// most fractional binary (lowest id on ties) and prunes a node when its bound
/// is within max(abs_gap, rel_gap * |incumbent|) of the incumbent.
BnbReport solve_mixed_integer(const ConicProgram& program, const Tolerances& tol = {},
                              const BnbOptions& options = {});

/// Fix every binary to its assigned value and solve the continuous program
/// for its duals. Throws InfeasibleError when the fixed program is infeasible
/// and SolverLimitError when the solve does not converge.
ConicSolution refix_and_dualize(const ConicProgram& program, std::span<const std::pair<VariableRef, double>> assignment,
                                const Tolerances& tol = {});

struct ExactnessReport {
  // Slack of every cone at the solution: t^2 - |x|^2 for second-order cones,
  // 2uv - |x|^2 for rotated ones.
  std::vector<double> slack;
  // Relaxation cones whose slack exceeds the exactness tolerance.
  std::vector<ConeRef> inexact;
  double max_relaxation_slack = 0.0;  // over cones flagged as relaxations
};

ExactnessReport soc_exactness(const ConicProgram& program, const ConicSolution& solution,
                              const Tolerances& tol = {});

/// Tags of the rows carrying the largest Farkas multipliers of an infeasible
/// solve, largest first. Empty when the solution has no certificate.
std::vector<std::string> certificate_tags(const ConicProgram& program, const ConicSolution& solution,
                                          std::size_t max_tags = 8);

}  // namespace equiflex::conic
