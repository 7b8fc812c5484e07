#include "gmpc/attitude_system.hpp"

#include <algorithm>
#include <utility>

namespace gmpc {

AttitudeSystem::AttitudeSystem(terminal::TerminalDesign design, so3::BranchConvention convention)
    : design_(std::move(design)), convention_(convention) {}

std::optional<AttitudeSystem::State> AttitudeSystem::step(const State& x, const Control& u) const {
  auto result = lgvi::try_step(x, u, design_.h, design_.j, 0.0);
  if (!result) {
    return std::nullopt;
  }
  return result->next;
}

double AttitudeSystem::distance(const State& a, const State& b) const {
  return std::max(so3::geodesic_distance(a.g, b.g), so3::geodesic_distance(a.f, b.f));
}

double AttitudeSystem::stage_cost(const State& x, const Control& u) const {
  return terminal::stage_cost(x, u, design_.weights, design_.h);
}

double AttitudeSystem::terminal_cost(const State& x) const {
  return terminal::terminal_cost(x, design_, convention_);
}

AttitudeSystem::Control AttitudeSystem::local_law(const State& x) const {
  return terminal::local_law_extended(x, design_, convention_);
}

double AttitudeSystem::path_violation(const State& x, const Control& u) const {
  const so3::Matrix3 m = lgvi::momentum_matrix(x, u, design_.h, design_.j);
  const double margin = lgvi::check_solvability(m, design_.j).margin;
  return std::max(0.0, design_.constraints.min_solvability_margin - margin);
}

}  // namespace gmpc
