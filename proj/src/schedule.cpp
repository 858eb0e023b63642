#include "dcoef/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dcoef {

void LrSchedule::validate() const {
  if (!(eta0 > 0.0)) throw std::invalid_argument("schedule: eta0 must be positive");
  if (!(cycle0 > 0.0)) throw std::invalid_argument("schedule: first cycle length must be positive");
  if (!(growth > 1.0)) throw std::invalid_argument("schedule: cycle growth must exceed 1");
  if (!(restart_decay > 0.0 && restart_decay <= 1.0)) throw std::invalid_argument("schedule: restart decay must lie in (0, 1]");
  if (!(eta_min >= 0.0)) throw std::invalid_argument("schedule: eta_min must be >= 0");
}

CyclePosition cycle_at(const LrSchedule& schedule, double fractional_epoch) {
  schedule.validate();
  if (!(fractional_epoch >= 0.0)) throw std::invalid_argument("schedule: epoch must be >= 0");
  CyclePosition pos{0, 0.0, schedule.cycle0, schedule.eta0, 0.0};
  while (fractional_epoch >= pos.start + pos.length) {
    pos.start += pos.length;
    pos.length *= schedule.growth;
    pos.peak *= schedule.restart_decay;
    ++pos.cycle;
  }
  pos.progress = (fractional_epoch - pos.start) / pos.length;
  return pos;
}

double lr_at(const LrSchedule& schedule, double fractional_epoch) {
  const CyclePosition pos = cycle_at(schedule, fractional_epoch);
  return schedule.eta_min +
         0.5 * (pos.peak - schedule.eta_min) * (1.0 + std::cos(std::numbers::pi * pos.progress));
}

}  // namespace dcoef
