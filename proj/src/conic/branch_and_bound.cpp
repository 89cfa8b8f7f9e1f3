#include "equiflex/conic/branch_and_bound.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <memory>
#include <optional>
#include <queue>
#include <string>

#include "equiflex/error.hpp"

namespace equiflex::conic {

std::string to_string(BnbStatus s) {
  switch (s) {
    case BnbStatus::optimal: return "optimal";
    case BnbStatus::infeasible: return "infeasible";
    case BnbStatus::node_limit: return "node-limit";
    case BnbStatus::solver_failure: return "solver-failure";
  }
  return "unknown";
}

namespace {

struct Node {
  std::size_t id = 0;
  Assignment fixings;
  ConicSolution relaxation;
};

struct NodeOrder {
  bool operator()(const Node* a, const Node* b) const {
    const double fa = a->relaxation.objective_value;
    const double fb = b->relaxation.objective_value;
    if (fa != fb) return fa > fb;
    return a->id > b->id;
  }
};

double fractionality(double x) { return std::min(std::abs(x), std::abs(1.0 - x)); }

// Most fractional binary above the integrality tolerance; lowest id wins ties.
std::optional<VariableRef> branching_variable(const std::vector<VariableRef>& binaries,
                                              const ConicSolution& sol, double int_tol) {
  std::optional<VariableRef> best;
  double best_frac = int_tol;
  for (VariableRef b : binaries) {
    const double f = fractionality(sol.primal[b.id]);
    if (f > best_frac) {
      best_frac = f;
      best = b;
    }
  }
  return best;
}

Assignment rounded(const std::vector<VariableRef>& binaries, const ConicSolution& sol) {
  Assignment a;
  a.reserve(binaries.size());
  for (VariableRef b : binaries) a.emplace_back(b, sol.primal[b.id] >= 0.5 ? 1.0 : 0.0);
  return a;
}

}  // namespace

ConicSolution refix_and_dualize(const ConicProgram& program,
                                std::span<const std::pair<VariableRef, double>> assignment,
                                const Tolerances& tol) {
  const auto bins = program.binaries();
  if (assignment.size() < bins.size()) {
    throw ModelError("assignment covers " + std::to_string(assignment.size()) + " of " +
                     std::to_string(bins.size()) + " binaries");
  }
  const ConicProgram fixed = program.with_fixed_binaries(assignment);
  ConicSolution sol = solve_relaxation(fixed, tol);
  if (sol.status == SolveStatus::infeasible) {
    throw InfeasibleError("program is infeasible under the given binary assignment");
  }
  if (!sol.optimal()) {
    throw SolverLimitError("fixed-binary solve ended with status " + to_string(sol.status));
  }
  return sol;
}

BnbReport solve_mixed_integer(const ConicProgram& program, const Tolerances& tol,
                              const BnbOptions& options) {
  BnbReport report;
  const auto binaries = program.binaries();

  auto solve_fixed = [&](const Assignment& fix) {
    return fix.empty() ? solve_relaxation(program, tol)
                       : solve_relaxation(program.with_fixed_binaries(fix), tol);
  };

  std::vector<std::unique_ptr<Node>> storage;
  auto make_node = [&](Assignment fix) {
    auto n = std::make_unique<Node>();
    n->id = storage.size();
    n->fixings = std::move(fix);
    storage.push_back(std::move(n));
    return storage.back().get();
  };

  Node* root = make_node({});
  root->relaxation = solve_fixed(root->fixings);
  report.nodes_explored = 1;
  switch (root->relaxation.status) {
    case SolveStatus::optimal: break;
    case SolveStatus::infeasible:
      report.status = BnbStatus::infeasible;
      report.proven = true;
      report.incumbent = root->relaxation;
      return report;
    default:
      report.status = BnbStatus::solver_failure;
      report.incumbent = root->relaxation;
      return report;
  }

  double pruned_bound = kInf;  // lowest bound among discarded nodes
  bool complete = true;

  auto slack = [&]() {
    return std::max(tol.abs_gap, tol.rel_gap * std::abs(report.incumbent.objective_value));
  };
  auto prunable = [&](double bound) {
    return report.has_incumbent && bound >= report.incumbent.objective_value - slack();
  };
  auto offer = [&](const ConicSolution& sol) {
    if (!report.has_incumbent || sol.objective_value < report.incumbent.objective_value) {
      report.incumbent = sol;
      report.has_incumbent = true;
      report.fixed_binaries = rounded(binaries, sol);
    }
  };
  // An integral relaxation is polished by re-solving with its binaries fixed so
  // that the incumbent is exactly what refix_and_dualize returns.
  auto offer_integral = [&](const ConicSolution& sol) {
    ConicSolution s = solve_relaxation(program.with_fixed_binaries(rounded(binaries, sol)), tol);
    offer(s.optimal() ? s : sol);
  };
  // Rounding heuristic: a binary linked to an active continuous variable is set
  // to one, the rest are rounded; every binary is then fixed and the continuous
  // program re-solved.
  auto heuristic = [&](const ConicSolution& sol) {
    Assignment guess = rounded(binaries, sol);
    std::vector<double> value(program.num_variables(), 0.0);
    for (const auto& [b, v] : guess) value[b.id] = v;
    for (const IndicatorLink& link : program.indicator_links()) {
      const Variable& bv = program.variable(link.binary);
      if (std::abs(sol.primal[link.gated.id]) > tol.integrality && bv.upper >= 1.0) {
        value[link.binary.id] = 1.0;
      }
    }
    Assignment linked = guess;
    for (auto& [b, v] : linked) v = value[b.id];
    for (const Assignment* cand : {&linked, &guess}) {
      if (cand == &guess && guess == linked) break;
      ConicSolution s = solve_relaxation(program.with_fixed_binaries(*cand), tol);
      if (s.optimal()) {
        offer(s);
        return;
      }
    }
  };

  std::priority_queue<Node*, std::vector<Node*>, NodeOrder> open;
  if (binaries.empty()) {
    offer(root->relaxation);
  } else if (!branching_variable(binaries, root->relaxation, tol.integrality)) {
    offer_integral(root->relaxation);
  } else {
    heuristic(root->relaxation);
    open.push(root);
  }

  while (!open.empty()) {
    Node* node = open.top();
    open.pop();
    const double bound = node->relaxation.objective_value;
    if (prunable(bound)) {
      pruned_bound = std::min(pruned_bound, bound);
      continue;
    }
    if (report.nodes_explored + 2 > options.node_limit) {
      pruned_bound = std::min(pruned_bound, bound);
      complete = false;
      while (!open.empty()) {
        pruned_bound = std::min(pruned_bound, open.top()->relaxation.objective_value);
        open.pop();
      }
      break;
    }
    const VariableRef var = *branching_variable(binaries, node->relaxation, tol.integrality);
    Node* children[2];
    for (int side = 0; side < 2; ++side) {
      Assignment fix = node->fixings;
      fix.emplace_back(var, double(side));
      children[side] = make_node(std::move(fix));
    }
    if (options.parallel) {
      auto other = std::async(std::launch::async, [&] { return solve_fixed(children[1]->fixings); });
      children[0]->relaxation = solve_fixed(children[0]->fixings);
      children[1]->relaxation = other.get();
    } else {
      for (Node* c : children) c->relaxation = solve_fixed(c->fixings);
    }
    report.nodes_explored += 2;
    for (Node* c : children) {
      const ConicSolution& r = c->relaxation;
      if (r.status == SolveStatus::infeasible) continue;
      if (!r.optimal()) {
        complete = false;
        continue;
      }
      if (!branching_variable(binaries, r, tol.integrality)) {
        offer_integral(r);
        continue;
      }
      if (!report.has_incumbent) heuristic(r);
      if (prunable(r.objective_value)) {
        pruned_bound = std::min(pruned_bound, r.objective_value);
        continue;
      }
      open.push(c);
    }
    // Release relaxations that are no longer needed.
    ConicSolution stub;
    stub.status = SolveStatus::optimal;
    stub.objective_value = node->relaxation.objective_value;
    node->relaxation = std::move(stub);
  }

  if (!report.has_incumbent) {
    report.status = complete ? BnbStatus::infeasible : BnbStatus::node_limit;
    report.proven = complete;
    report.best_bound = pruned_bound;
    return report;
  }
  report.best_bound = std::min(pruned_bound, report.incumbent.objective_value);
  report.proven = complete;
  report.status = complete ? BnbStatus::optimal : BnbStatus::node_limit;
  return report;
}

ExactnessReport soc_exactness(const ConicProgram& program, const ConicSolution& solution,
                              const Tolerances& tol) {
  ExactnessReport rep;
  const auto& cones = program.cones();
  rep.slack.reserve(cones.size());
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const Cone& c = cones[k];
    std::vector<double> m;
    m.reserve(c.members.size());
    for (const auto& e : c.members) m.push_back(evaluate(e, solution.primal));
    double s = 0.0;
    std::size_t first = 1;
    if (c.kind == ConeKind::second_order) {
      s = m[0] * m[0];
    } else {
      s = 2.0 * m[0] * m[1];
      first = 2;
    }
    for (std::size_t i = first; i < m.size(); ++i) s -= m[i] * m[i];
    rep.slack.push_back(s);
    if (c.relaxation) {
      rep.max_relaxation_slack = std::max(rep.max_relaxation_slack, s);
      if (s > tol.exactness) rep.inexact.push_back(ConeRef{k});
    }
  }
  return rep;
}

std::vector<std::string> certificate_tags(const ConicProgram& program, const ConicSolution& solution,
                                          std::size_t max_tags) {
  const auto& y = solution.certificate;
  std::vector<std::size_t> rows;
  double top = 0.0;
  for (double v : y) top = std::max(top, std::abs(v));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) > 1e-6 * top) rows.push_back(i);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(y[a]) > std::abs(y[b]); });
  if (rows.size() > max_tags) rows.resize(max_tags);
  std::vector<std::string> out;
  for (std::size_t i : rows) out.push_back(program.constraints()[i].tag);
  return out;
}

}  // namespace equiflex::conic
