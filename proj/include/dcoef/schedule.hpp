#pragma once

#include <cstddef>

namespace dcoef {

/// Cosine annealing with warm restarts. Cycle n lasts cycle0 * growth^n epochs and restarts
/// from eta0 * restart_decay^n.
struct LrSchedule {
  double eta0 = 0.1;
  double cycle0 = 1.0;
  double growth = 1.5;
  double restart_decay = 0.9;
  double eta_min = 0.0;

  void validate() const;
};

struct CyclePosition {
  std::size_t cycle = 0;
  double start = 0.0;     // epoch at which the cycle begins
  double length = 0.0;
  double peak = 0.0;
  double progress = 0.0;  // in [0, 1)
};

CyclePosition cycle_at(const LrSchedule& schedule, double fractional_epoch);

/// eta_min + 0.5 * (peak - eta_min) * (1 + cos(pi * progress)) within the current cycle.
double lr_at(const LrSchedule& schedule, double fractional_epoch);

}  // namespace dcoef
