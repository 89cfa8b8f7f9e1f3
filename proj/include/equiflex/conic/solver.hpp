#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "equiflex/conic/program.hpp"

namespace equiflex::conic {

/// Tolerances shared by the continuous solver and branch-and-bound. All
/// quantities are on the per-unit scale of the program data.
struct Tolerances {
  double feasibility = 1e-8;
  double gap = 1e-8;
  double integrality = 1e-6;
  double abs_gap = 1e-6;
  // Pruning also accepts a relative slack so that two interior-point solves of
  // the same point on large objectives do not defeat the absolute gap.
  double rel_gap = 1e-7;
  double exactness = 1e-6;
  int max_iterations = 150;
};

enum class SolveStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(SolveStatus s);

struct ConicSolution {
  SolveStatus status = SolveStatus::iteration_limit;
  std::vector<double> primal;  // one entry per program variable
  // Sensitivity of the optimal objective to each row's right-hand side:
  // duals[i] = d(objective)/d(rhs_i). Rows removed by presolve report 0.
  std::vector<double> duals;
  // Dual cone vectors in the member order of each cone (rotated cones are
  // reported in their (u+v)/sqrt2, (u-v)/sqrt2, x coordinates).
  std::vector<std::vector<double>> cone_duals;
  // Farkas multipliers per row when status == infeasible and the iteration
  // produced a certificate; empty otherwise.
  std::vector<double> certificate;
  double objective_value = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;  // relative duality gap
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;

  [[nodiscard]] bool optimal() const { return status == SolveStatus::optimal; }
};

/// Solve the continuous relaxation (binaries relaxed to their [lo, hi] box)
/// with a homogeneous self-dual interior-point method.
ConicSolution solve_relaxation(const ConicProgram& program, const Tolerances& tol = {});

}  // namespace equiflex::conic
