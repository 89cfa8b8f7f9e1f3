#pragma once

#include <cstddef>
#include <cstdint>

#include "equiflex/conic/branch_and_bound.hpp"

namespace equiflex::scenario {

struct OracleResult {
  bool feasible = false;
  double best_objective = conic::kInf;
  conic::Assignment best_assignment;
  conic::ConicSolution best_solution;
  std::size_t candidates = 0;
};

inline constexpr std::size_t kMaxEnumeratedBinaries = 12;

/// Solve the continuous program under every 0/1 assignment of the binaries and
/// keep the best. Sub-solves may run on several threads; the reduction picks
/// the lowest objective and, on exact ties, the lowest assignment index.
OracleResult enumerate_oracle(const conic::ConicProgram& program, const conic::Tolerances& tol = {},
                              bool parallel = true);

/// Small mixed-integer SOCP used for oracle cross-checks: semi-continuous
/// supplies with fixed costs, a demand row and a quadratic penalty cone.
conic::ConicProgram random_mixed_program(std::uint64_t seed, std::size_t binaries);

}  // namespace equiflex::scenario
