#include "equiflex/stage1/dual_check.hpp"

#include <algorithm>
#include <cmath>

#include "equiflex/conic/branch_and_bound.hpp"
#include "equiflex/error.hpp"

namespace equiflex::stage1 {

DualCheckReport check_duals(const MarketInputs& in, const DualCheckOptions& opt) {
  if (!(opt.h_kw > 0.0)) throw ValidationError("perturbation step must be positive");
  const auto cleared = clear_energy_market(in, opt.clear);
  const auto& net = in.network;
  const double base = net.base.power_kw();
  const double h = opt.h_kw / base;
  const double scale = base * net.dt;  // $/p.u. -> $/kWh

  const auto model = assemble_stage1(in);
  auto cost_at = [&](std::size_t b, std::size_t t, double delta) {
    auto prog = model.program;
    const auto row = model.balance[b][t];
    prog.set_rhs(row, prog.constraints()[row.id].rhs + delta);
    const auto fixed = prog.with_fixed_binaries(cleared.dispatch.binaries);
    const auto sol = conic::solve_relaxation(fixed, opt.clear.tol);
    if (!sol.optimal()) {
      throw SolverLimitError("perturbed market at bus " + std::to_string(net.buses[b].id) + ", t=" +
                             std::to_string(t) + ": " + conic::to_string(sol.status));
    }
    return sol.objective_value;
  };

  DualCheckReport rep;
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    if (net.buses[b].kind != grid::BusKind::load) continue;
    for (std::size_t t = 0; t < net.horizon; ++t) {
      DualSample s;
      s.bus = net.buses[b].id;
      s.t = t;
      s.dlmp = cleared.dlmp.price[b][t];
      const double mid = cleared.solution.objective_value;
      const double up = cost_at(b, t, h), down = cost_at(b, t, -h);
      s.forward = (up - mid) / (h * scale);
      s.backward = (mid - down) / (h * scale);
      s.central = (up - down) / (2.0 * h * scale);
      const double mag = std::max({std::abs(s.forward), std::abs(s.backward), 1e-9});
      s.degenerate = std::abs(s.forward - s.backward) > opt.tolerance * mag;
      s.rel_error = std::abs(s.central - s.dlmp) / std::max(std::abs(s.dlmp), 1e-9);
      if (!s.degenerate) {
        ++rep.nondegenerate;
        if (s.rel_error <= opt.tolerance) ++rep.within;
        rep.max_rel_error = std::max(rep.max_rel_error, s.rel_error);
      }
      rep.samples.push_back(s);
    }
  }
  return rep;
}

}  // namespace equiflex::stage1
