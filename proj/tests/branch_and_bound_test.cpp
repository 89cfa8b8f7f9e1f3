#include <gtest/gtest.h>

#include <cmath>

#include "equiflex/conic/branch_and_bound.hpp"
#include "equiflex/error.hpp"
#include "equiflex/scenario/oracles.hpp"

namespace equiflex::conic {
namespace {

// Three-interval EV: 6 binaries, minimum charging power when on, and a trip
// energy target that forces charging.
ConicProgram ev_instance(double trip) {
  ConicProgram p;
  const double price[3] = {0.3, 0.1, 0.2};
  VariableRef soc_prev{};
  for (int t = 0; t < 3; ++t) {
    const std::string k = std::to_string(t);
    auto xc = p.add_binary("xch:" + k);
    auto xd = p.add_binary("xdch:" + k);
    auto pc = p.add_continuous("pch:" + k, 0.0, kInf);
    auto pd = p.add_continuous("pdch:" + k, 0.0, kInf);
    auto ug = p.add_continuous("ug:" + k, 0.0, kInf);
    auto soc = p.add_continuous("soc:" + k, 0.0, 10.0);
    p.add_constraint({{xc, 1.0}, {xd, 1.0}}, Sense::less_equal, 1.0, "excl:" + k);
    p.add_constraint({{pc, 1.0}, {xc, -4.0}}, Sense::less_equal, 0.0, "chmax:" + k);
    p.add_constraint({{pc, 1.0}, {xc, -1.0}}, Sense::greater_equal, 0.0, "chmin:" + k);
    p.add_constraint({{pd, 1.0}, {xd, -4.0}}, Sense::less_equal, 0.0, "dchmax:" + k);
    std::vector<Term> rec{{soc, 1.0}, {pc, -0.9}, {pd, 1.0 / 0.9}};
    double rhs = 2.0;
    if (t > 0) {
      rec.push_back({soc_prev, -1.0});
      rhs = 0.0;
    }
    p.add_constraint(rec, Sense::equal, rhs, "soc:" + k);
    p.add_constraint({{ug, 1.0}, {pd, 1.0}, {pc, -1.0}}, Sense::equal, 1.0, "balance:" + k);
    p.add_objective(ug, price[t]);
    p.add_objective(pc, 0.01);
    p.add_objective(pd, 0.01);
    p.link_indicator(xc, pc);
    p.link_indicator(xd, pd);
    soc_prev = soc;
  }
  p.add_constraint({{soc_prev, 1.0}}, Sense::greater_equal, trip, "trip");
  return p;
}

TEST(BranchAndBound, ZeroBinariesMatchesRelaxation) {
  auto p = scenario::random_mixed_program(3, 0);
  auto t = p.add_continuous("t", 1.0, 2.0);
  p.add_objective(t, 1.0);
  const auto rel = solve_relaxation(p);
  const auto rep = solve_mixed_integer(p);
  ASSERT_EQ(rep.status, BnbStatus::optimal);
  EXPECT_EQ(rep.nodes_explored, 1u);
  EXPECT_EQ(rep.incumbent.objective_value, rel.objective_value);
  EXPECT_EQ(rep.incumbent.primal, rel.primal);
}

TEST(BranchAndBound, TwoBinariesMatchEnumeration) {
  auto p = scenario::random_mixed_program(11, 2);
  const auto rep = solve_mixed_integer(p);
  const auto orc = scenario::enumerate_oracle(p);
  ASSERT_EQ(rep.status, BnbStatus::optimal);
  EXPECT_EQ(orc.candidates, 4u);
  EXPECT_NEAR(rep.incumbent.objective_value, orc.best_objective, 1e-6);
}

TEST(BranchAndBound, EvInstanceMatchesEnumeration) {
  auto p = ev_instance(7.0);
  ASSERT_EQ(p.binaries().size(), 6u);
  const auto rep = solve_mixed_integer(p);
  const auto orc = scenario::enumerate_oracle(p);
  ASSERT_EQ(rep.status, BnbStatus::optimal);
  ASSERT_TRUE(orc.feasible);
  EXPECT_EQ(orc.candidates, 64u);
  EXPECT_NEAR(rep.incumbent.objective_value, orc.best_objective, 1e-6);
  for (const auto& [b, v] : rep.fixed_binaries) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_GE(rep.incumbent.objective_value, rep.best_bound - 1e-6);
}

TEST(BranchAndBound, RandomCorpusMatchesEnumeration) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t nb = 2 + seed % 9;
    auto p = scenario::random_mixed_program(seed, nb);
    const auto rep = solve_mixed_integer(p);
    const auto orc = scenario::enumerate_oracle(p);
    ASSERT_EQ(rep.status, BnbStatus::optimal) << "seed " << seed;
    EXPECT_NEAR(rep.incumbent.objective_value, orc.best_objective, 1e-6) << "seed " << seed;
  }
}

TEST(BranchAndBound, SerialAndParallelAgreeBitwise) {
  for (std::uint64_t seed : {4u, 9u, 17u}) {
    auto p = scenario::random_mixed_program(seed, 8);
    BnbOptions serial;
    serial.parallel = false;
    const auto a = solve_mixed_integer(p, {}, serial);
    const auto b = solve_mixed_integer(p, {}, BnbOptions{});
    const auto c = solve_mixed_integer(p, {}, serial);
    EXPECT_EQ(a.nodes_explored, b.nodes_explored);
    EXPECT_EQ(a.nodes_explored, c.nodes_explored);
    EXPECT_EQ(a.incumbent.primal, b.incumbent.primal);
    EXPECT_EQ(a.incumbent.objective_value, c.incumbent.objective_value);
  }
}

TEST(BranchAndBound, NodeLimitIsReportedAsUnproven) {
  auto p = scenario::random_mixed_program(5, 10);
  BnbOptions opt;
  opt.node_limit = 3;
  const auto rep = solve_mixed_integer(p, {}, opt);
  if (rep.nodes_explored >= 3) {
    EXPECT_FALSE(rep.proven);
    EXPECT_EQ(rep.status, BnbStatus::node_limit);
  }
}

TEST(RefixAndDualize, ReproducesIncumbent) {
  auto p = ev_instance(7.0);
  const auto rep = solve_mixed_integer(p);
  const auto sol = refix_and_dualize(p, rep.fixed_binaries);
  EXPECT_NEAR(sol.objective_value, rep.incumbent.objective_value, 1e-8);
  EXPECT_EQ(sol.duals.size(), p.constraints().size());
}

TEST(RefixAndDualize, AllZeroAssignmentCannotMeetTrip) {
  auto p = ev_instance(7.0);
  Assignment zero;
  for (auto b : p.binaries()) zero.emplace_back(b, 0.0);
  EXPECT_THROW(refix_and_dualize(p, zero), InfeasibleError);
  EXPECT_THROW(refix_and_dualize(p, Assignment{}), ModelError);
}

TEST(RefixAndDualize, NoBinariesEqualsRelaxation) {
  auto p = scenario::random_mixed_program(8, 0);
  auto t = p.add_continuous("t", 0.5, 3.0);
  p.add_objective(t, -1.0);
  EXPECT_EQ(refix_and_dualize(p, Assignment{}).objective_value, solve_relaxation(p).objective_value);
}

// Two-bus branch: 2 * (v/2) * l >= P^2 + Q^2 with v = 1, P = 0.5, Q = 0.
ConicProgram branch(double loss_cost) {
  ConicProgram p;
  auto pf = p.add_continuous("P", 0.5, 0.5);
  auto qf = p.add_continuous("Q", 0.0, 0.0);
  auto l = p.add_continuous("l", 0.0, 10.0);
  p.add_objective(l, loss_cost);
  p.add_cone(ConeKind::rotated_second_order, {AffineExpr(0.5), AffineExpr(l), AffineExpr(pf), AffineExpr(qf)},
             "branch", true);
  return p;
}

TEST(SocExactness, TightWhenLossesCostMoney) {
  auto p = branch(1.0);
  const auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  const auto rep = soc_exactness(p, sol);
  EXPECT_LE(rep.max_relaxation_slack, 1e-6);
  EXPECT_TRUE(rep.inexact.empty());
}

TEST(SocExactness, FlagsRewardedLosses) {
  auto p = branch(-1.0);
  const auto sol = solve_relaxation(p);
  ASSERT_TRUE(sol.optimal());
  const auto rep = soc_exactness(p, sol);
  ASSERT_EQ(rep.inexact.size(), 1u);
  EXPECT_NEAR(rep.slack[0], 10.0 - 0.25, 1e-6);
}

TEST(SocExactness, InteriorSlackIsDefinition) {
  ConicProgram p;
  auto t = p.add_continuous("t", 3.0, 3.0);
  auto x = p.add_continuous("x", 1.0, 1.0);
  p.add_cone(ConeKind::second_order, {AffineExpr(t), AffineExpr(x), AffineExpr(2.0)}, "c", true);
  ConicSolution s;
  s.status = SolveStatus::optimal;
  s.primal = {3.0, 1.0};
  const auto rep = soc_exactness(p, s);
  EXPECT_DOUBLE_EQ(rep.slack[0], 9.0 - 1.0 - 4.0);
  EXPECT_EQ(rep.inexact.size(), 1u);
}

}  // namespace
}  // namespace equiflex::conic
