// Rigid-body attitude control as a ManifoldSystem on SO(3)×SO(3).
//
// State (g, f), control τ ∈ R³.  The dynamics are the variational integrator,
// costs and local law come from a TerminalDesign.  Steps whose solvability
// margin λ_min(J² + M²/4) is negative are undefined; steps with margin below
// the design's min_solvability_margin are reported through path_violation.

#pragma once

#include <optional>

#include "gmpc/lgvi.hpp"
#include "gmpc/manifold_system.hpp"
#include "gmpc/so3.hpp"
#include "gmpc/terminal_design.hpp"

namespace gmpc {

class AttitudeSystem {
 public:
  using State = lgvi::SpacecraftState;
  static constexpr int kControlDim = 3;
  using Control = so3::Vector3;

  explicit AttitudeSystem(terminal::TerminalDesign design,
                          so3::BranchConvention convention = so3::BranchConvention::kNonNegative);

  std::optional<State> step(const State& x, const Control& u) const;

  /// max(d(g₁, g₂), d(f₁, f₂)) with the geodesic distance on SO(3).
  double distance(const State& a, const State& b) const;

  State equilibrium_state() const { return State::identity(); }
  Control equilibrium_control() const { return Control::Zero(); }

  double stage_cost(const State& x, const Control& u) const;
  double terminal_cost(const State& x) const;
  double terminal_level() const { return design_.c; }
  Control local_law(const State& x) const;

  bool in_state_constraints(const State&) const { return true; }
  Control control_lower() const { return Control::Constant(-design_.constraints.tau_max); }
  Control control_upper() const { return Control::Constant(design_.constraints.tau_max); }

  /// max(0, ε_solv - λ_min(J² + M²/4)).
  double path_violation(const State& x, const Control& u) const;

  const terminal::TerminalDesign& design() const { return design_; }
  so3::BranchConvention convention() const { return convention_; }

 private:
  terminal::TerminalDesign design_;
  so3::BranchConvention convention_;
};

static_assert(mpc::ManifoldSystem<AttitudeSystem>);

}  // namespace gmpc
