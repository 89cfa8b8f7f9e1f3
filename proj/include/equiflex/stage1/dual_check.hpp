#pragma once

#include <vector>

#include "equiflex/stage1/market.hpp"

namespace equiflex::stage1 {

/// Finite-difference check of the DLMPs: the active balance right-hand side
/// of a (bus, t) is shifted by +-h with the binaries held at the cleared
/// incumbent, and the change of the optimal cost is compared with the dual.
struct DualSample {
  int bus = 0;
  std::size_t t = 0;
  double dlmp = 0.0;      // $/kWh
  double central = 0.0;   // finite-difference estimate, $/kWh
  double forward = 0.0, backward = 0.0;
  double rel_error = 0.0;
  // One-sided slopes disagree: the point sits on a kink of the cost curve
  // and has no unique marginal price.
  bool degenerate = false;
};

struct DualCheckOptions {
  double h_kw = 0.5;
  double tolerance = 0.05;  // relative, used for the pass fraction and the kink test
  ClearOptions clear;
};

struct DualCheckReport {
  std::vector<DualSample> samples;  // every load bus and interval
  std::size_t nondegenerate = 0;
  std::size_t within = 0;           // nondegenerate samples within tolerance
  double max_rel_error = 0.0;       // over nondegenerate samples
  [[nodiscard]] double fraction_within() const {
    return nondegenerate ? double(within) / double(nondegenerate) : 1.0;
  }
};

DualCheckReport check_duals(const MarketInputs& in, const DualCheckOptions& opt = {});

}  // namespace equiflex::stage1
