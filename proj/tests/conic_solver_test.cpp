#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "equiflex/conic/program.hpp"
#include "equiflex/conic/solver.hpp"
#include "equiflex/error.hpp"

namespace equiflex::conic {
namespace {

TEST(ConicProgram, AddVariableRejectsInvertedBounds) {
  ConicProgram p;
  auto a = p.add_variable("pdg:c1:t5", VarKind::continuous, 0.0, 0.5);
  auto b = p.add_variable("xch:e1:t5", VarKind::binary, 0.0, 1.0);
  EXPECT_NE(a, b);
  EXPECT_THROW(p.add_variable("bad", VarKind::continuous, 3.0, 1.0), ModelError);
  EXPECT_THROW(p.add_variable("pdg:c1:t5", VarKind::continuous, 0.0, 1.0), ModelError);
  EXPECT_THROW(p.add_variable("bin2", VarKind::binary, 0.0, 2.0), ModelError);
}

TEST(ConicProgram, ConstraintValidation) {
  ConicProgram p;
  auto x = p.add_continuous("x");
  p.add_constraint({{x, 1.0}}, Sense::equal, 1.0, "row");
  EXPECT_THROW(p.add_constraint({{x, 1.0}}, Sense::equal, 1.0, "row"), ModelError);
  EXPECT_THROW(p.add_constraint({{x, 1.0}, {x, -1.0}}, Sense::equal, 0.0, "empty"), ModelError);
  EXPECT_THROW(p.add_constraint({{VariableRef{7}, 1.0}}, Sense::equal, 0.0, "undeclared"),
               ModelError);
  EXPECT_THROW(p.add_cone(ConeKind::rotated_second_order, {AffineExpr(x), AffineExpr(x)}, "small"),
               ModelError);
  p.seal();
  EXPECT_THROW(p.add_continuous("y"), ModelError);
}

TEST(SolveRelaxation, SecondOrderConeNorm) {
  ConicProgram p;
  auto t = p.add_continuous("t");
  p.add_objective(t, 1.0);
  p.add_cone(ConeKind::second_order, {AffineExpr(t), AffineExpr(3.0), AffineExpr(4.0)}, "norm");
  auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal()) << to_string(sol.status);
  EXPECT_NEAR(sol.primal[t.id], 5.0, 1e-7);
}

TEST(SolveRelaxation, RotatedCone) {
  // maximize w subject to 2*1*1 >= w^2.
  ConicProgram p;
  auto w = p.add_continuous("w");
  p.add_objective(w, -1.0);
  p.add_cone(ConeKind::rotated_second_order, {AffineExpr(1.0), AffineExpr(1.0), AffineExpr(w)},
             "rot");
  auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.primal[w.id], std::sqrt(2.0), 1e-7);
}

TEST(SolveRelaxation, EqualityDualEqualsCost) {
  ConicProgram p;
  auto x = p.add_continuous("x");
  auto y = p.add_continuous("y");
  p.add_objective(x, 2.5);
  p.add_objective(y, -1.5);
  p.add_constraint({{x, 1.0}}, Sense::equal, 3.0, "fix-x");
  p.add_constraint({{y, 1.0}}, Sense::equal, -2.0, "fix-y");
  auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.objective_value, 2.5 * 3.0 + 1.5 * 2.0, 1e-7);
  EXPECT_NEAR(sol.duals[0], 2.5, 1e-7);
  EXPECT_NEAR(sol.duals[1], -1.5, 1e-7);
}

TEST(SolveRelaxation, InequalityDualSigns) {
  // min x s.t. x >= 2  -> d obj / d rhs = +1;  min -x s.t. x <= 4 -> -1.
  ConicProgram p;
  auto x = p.add_continuous("x");
  auto y = p.add_continuous("y");
  p.add_objective(x, 1.0);
  p.add_objective(y, -1.0);
  p.add_constraint({{x, 1.0}}, Sense::greater_equal, 2.0, "lo");
  p.add_constraint({{y, 1.0}}, Sense::less_equal, 4.0, "hi");
  auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.duals[0], 1.0, 1e-7);
  EXPECT_NEAR(sol.duals[1], -1.0, 1e-7);
}

TEST(SolveRelaxation, DetectsInfeasibility) {
  ConicProgram p;
  auto x = p.add_continuous("x", 0.0, 1.0);
  p.add_objective(x, 1.0);
  p.add_constraint({{x, 1.0}}, Sense::greater_equal, 2.0, "too-big");
  auto sol = solve_relaxation(p);
  EXPECT_EQ(sol.status, SolveStatus::infeasible);
  ASSERT_EQ(sol.certificate.size(), 1u);
}

TEST(SolveRelaxation, DetectsUnboundedness) {
  ConicProgram p;
  auto x = p.add_continuous("x", -kInf, 0.0);
  auto t = p.add_continuous("t");
  p.add_objective(x, 1.0);
  p.add_cone(ConeKind::second_order, {AffineExpr(t), AffineExpr(x)}, "c");
  auto sol = solve_relaxation(p);
  EXPECT_EQ(sol.status, SolveStatus::unbounded);
}

TEST(SolveRelaxation, FixedVariablesArePresolved) {
  ConicProgram p;
  auto x = p.add_continuous("x", 2.0, 2.0);
  auto y = p.add_continuous("y", 0.0, 10.0);
  p.add_objective(x, 1.0);
  p.add_objective(y, 1.0);
  p.add_constraint({{x, 1.0}, {y, 1.0}}, Sense::greater_equal, 5.0, "sum");
  p.add_constraint({{x, 1.0}}, Sense::equal, 2.0, "only-fixed");
  auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  EXPECT_DOUBLE_EQ(sol.primal[x.id], 2.0);
  EXPECT_NEAR(sol.primal[y.id], 3.0, 1e-7);
  EXPECT_EQ(sol.duals[1], 0.0);

  ConicProgram bad;
  auto z = bad.add_continuous("z", 1.0, 1.0);
  bad.add_constraint({{z, 1.0}}, Sense::equal, 2.0, "conflict");
  EXPECT_EQ(solve_relaxation(bad).status, SolveStatus::infeasible);
}

// Random feasible SOCPs: weak duality and perturbation consistency of duals.
class RandomSocp : public ::testing::TestWithParam<int> {};

ConicProgram random_program(unsigned seed, std::vector<ConstraintRef>& eq_rows) {
  std::mt19937_64 rng(seed);
  auto unif = [&](double lo, double hi) {
    return lo + (hi - lo) * double(rng() >> 11) * 0x1.0p-53;
  };
  ConicProgram p;
  const int n = 8;
  std::vector<VariableRef> x;
  for (int i = 0; i < n; ++i) x.push_back(p.add_continuous("x" + std::to_string(i), -5.0, 5.0));
  for (int i = 0; i < n; ++i) p.add_objective(x[i], unif(-1.0, 1.0));
  // Equalities through a known interior point x0 = 0.5.
  for (int r = 0; r < 3; ++r) {
    std::vector<Term> row;
    double rhs = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = unif(-1.0, 1.0);
      row.push_back({x[i], a});
      rhs += 0.5 * a;
    }
    eq_rows.push_back(p.add_constraint(row, Sense::equal, rhs, "eq" + std::to_string(r)));
  }
  // Cones t >= ||(x1 - x2, x3)||, with t = 3 + x0.
  for (int c = 0; c < 3; ++c) {
    std::vector<AffineExpr> mem;
    mem.emplace_back(AffineExpr(3.0).add(x[c], 1.0));
    mem.emplace_back(AffineExpr(0.0).add(x[c + 1], 1.0).add(x[c + 2], -1.0));
    mem.emplace_back(AffineExpr(x[c + 3], 1.0));
    p.add_cone(ConeKind::second_order, std::move(mem), "cone" + std::to_string(c));
  }
  return p;
}

TEST_P(RandomSocp, WeakDualityAndPerturbation) {
  std::vector<ConstraintRef> eq_rows;
  auto p = random_program(unsigned(GetParam()), eq_rows);
  Tolerances tol;
  auto sol = solve_relaxation(p, tol);
  ASSERT_TRUE(sol.optimal()) << to_string(sol.status);
  EXPECT_LE(std::abs(sol.objective_value - sol.dual_objective) / (1.0 + std::abs(sol.objective_value)),
            1e-7);
  const double eps = 1e-4;
  for (auto r : eq_rows) {
    auto bump = [&](double e) {
      ConicProgram q = p;
      q.set_rhs(r, p.constraints()[r.id].rhs + e);
      auto s = solve_relaxation(q, tol);
      EXPECT_TRUE(s.optimal());
      return (s.objective_value - sol.objective_value) / e;
    };
    const double up = bump(eps);
    const double down = bump(-eps);
    if (std::abs(up - down) > 0.05 * (1.0 + std::abs(up))) continue;  // degenerate vertex
    EXPECT_NEAR(up, sol.duals[r.id], 0.05 * (1.0 + std::abs(sol.duals[r.id])));
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomSocp, ::testing::Range(1, 11));

TEST(ConicText, RoundTripIsLossless) {
  std::vector<ConstraintRef> rows;
  auto p = random_program(42, rows);
  auto b = p.add_binary("b0");
  p.link_indicator(b, VariableRef{0});
  p.add_cone(ConeKind::rotated_second_order,
             {AffineExpr(VariableRef{1}, 0.5), AffineExpr(VariableRef{2}), AffineExpr(0.1)}, "rot",
             true);
  std::ostringstream a;
  p.write_text(a);
  std::istringstream in(a.str());
  auto q = ConicProgram::read_text(in);
  std::ostringstream c;
  q.write_text(c);
  EXPECT_EQ(a.str(), c.str());
  EXPECT_EQ(q.cones().back().relaxation, true);
  EXPECT_EQ(q.indicator_links().size(), 1u);

  std::istringstream broken("CONIC 1\nVARS 1\nx Q 0 1 0\n");
  EXPECT_THROW(ConicProgram::read_text(broken), ParseError);
}

}  // namespace
}  // namespace equiflex::conic
