// Contract for a discrete-time system x⁺ = f(x, u) evolving on a manifold,
// together with the MPC ingredients attached to it.
//
// A model supplies:
//   step(x, u)            the update map; nullopt when the step is undefined
//   distance(x, y)        a metric on the state manifold
//   equilibrium_state()   x_e with step(x_e, u_e) = x_e
//   equilibrium_control() u_e
//   stage_cost(x, u)      L, with L(x_e, u_e) = 0 and L(x, u) ≥ L(x, u_e) ≥ 0
//   terminal_cost(x)      F, with F(x_e) = 0
//   terminal_level()      c such that X_T = {x : F(x) ≤ c}
//   local_law(x)          κ, certified on X_T
//   in_state_constraints  membership in X
//   control_lower/upper   the box U
//   path_violation(x, u)  nonnegative excess of any per-step constraint

#pragma once

#include <concepts>
#include <optional>

#include <Eigen/Core>

namespace gmpc::mpc {

template <class S>
concept ManifoldSystem =
    std::copyable<S> && std::copyable<typename S::State> &&
    std::same_as<typename S::Control, Eigen::Matrix<double, S::kControlDim, 1>> &&
    requires(const S& sys, const typename S::State& x, const typename S::Control& u) {
      { sys.step(x, u) } -> std::same_as<std::optional<typename S::State>>;
      { sys.distance(x, x) } -> std::convertible_to<double>;
      { sys.equilibrium_state() } -> std::convertible_to<typename S::State>;
      { sys.equilibrium_control() } -> std::convertible_to<typename S::Control>;
      { sys.stage_cost(x, u) } -> std::convertible_to<double>;
      { sys.terminal_cost(x) } -> std::convertible_to<double>;
      { sys.terminal_level() } -> std::convertible_to<double>;
      { sys.local_law(x) } -> std::convertible_to<typename S::Control>;
      { sys.in_state_constraints(x) } -> std::convertible_to<bool>;
      { sys.control_lower() } -> std::convertible_to<typename S::Control>;
      { sys.control_upper() } -> std::convertible_to<typename S::Control>;
      { sys.path_violation(x, u) } -> std::convertible_to<double>;
    };

template <ManifoldSystem S>
bool in_terminal_set(const S& sys, const typename S::State& x, double tolerance = 0.0) {
  return sys.terminal_cost(x) <= sys.terminal_level() + tolerance;
}

template <ManifoldSystem S>
bool in_control_set(const S& sys, const typename S::Control& u, double tolerance = 0.0) {
  return (u.array() >= sys.control_lower().array() - tolerance).all() &&
         (u.array() <= sys.control_upper().array() + tolerance).all();
}

}  // namespace gmpc::mpc
