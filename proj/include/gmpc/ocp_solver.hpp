// Finite-horizon optimal control problem
//
//   min  V_N(x; u_0..u_{N-1}) = F(x_N) + Σ_{i<N} L(x_i, u_i)
//   s.t. x_{i+1} = f(x_i, u_i),  u_i ∈ U,  x_N ∈ X_T
//
// solved by single shooting over the stacked controls.  The control box is
// enforced by projection; the terminal set and per-step path constraints by a
// quadratic penalty whose weight grows between rounds.  Each round runs
// projected gradient descent with a Barzilai-Borwein trial step and Armijo
// backtracking on central finite-difference gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gmpc/manifold_system.hpp"

namespace gmpc::mpc {

class RolloutFailure : public std::runtime_error {
 public:
  explicit RolloutFailure(std::size_t step)
      : std::runtime_error("rollout undefined at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SolverOptions {
  int max_iterations = 200;       // projected-gradient iterations per penalty round
  double grad_tol = 1e-6;         // on ‖u - Π(u - ∇Φ)‖_∞
  double fd_step = 1e-6;
  double penalty_weight = 1e2;
  double penalty_growth = 10.0;
  int max_penalty_rounds = 6;
  double violation_tol = 1e-8;
  double terminal_backoff = 1e-3;  // penalize F(x_N) above (1 - backoff)·c
  double armijo_c1 = 1e-4;
  double armijo_shrink = 0.5;
  int max_backtracks = 40;

  void validate() const {
    if (max_iterations < 0 || max_penalty_rounds < 1 || max_backtracks < 1) {
      throw InvalidConfig("solver iteration limits must be positive");
    }
    if (!(grad_tol > 0 && fd_step > 0 && penalty_weight > 0 && penalty_growth >= 1 &&
          violation_tol > 0 && terminal_backoff >= 0 && terminal_backoff < 1 && armijo_c1 > 0 &&
          armijo_c1 < 1 && armijo_shrink > 0 && armijo_shrink < 1)) {
      throw InvalidConfig("solver tolerances out of range");
    }
  }
};

struct MpcConfig {
  int horizon = 10;
  SolverOptions solver;

  void validate() const {
    if (horizon < 1) {
      throw InvalidConfig("horizon must be at least 1");
    }
    solver.validate();
  }
};

template <ManifoldSystem S>
struct OcpSolution {
  using State = typename S::State;
  using Control = typename S::Control;

  std::vector<Control> controls;  // u*_{k|k} .. u*_{k+N-1|k}
  std::vector<State> predicted;   // x_{k|k} .. x_{k+N|k}
  double cost = std::numeric_limits<double>::quiet_NaN();            // V_N*
  double terminal_value = std::numeric_limits<double>::quiet_NaN();  // F(x_{k+N|k})
  double violation = std::numeric_limits<double>::infinity();
  bool feasible = false;
  int iterations = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
};

/// Cost, constraint excess, and predicted trajectory of a control sequence.
template <ManifoldSystem S>
struct Evaluation {
  bool defined = false;
  std::size_t failed_step = 0;
  double cost = std::numeric_limits<double>::infinity();
  double terminal_value = std::numeric_limits<double>::infinity();
  double violation = std::numeric_limits<double>::infinity();
  std::vector<typename S::State> trajectory;
};

template <ManifoldSystem S>
Evaluation<S> evaluate_sequence(const S& sys, const typename S::State& x0,
                                std::span<const typename S::Control> controls) {
  Evaluation<S> ev;
  ev.trajectory.reserve(controls.size() + 1);
  ev.trajectory.push_back(x0);
  double cost = 0.0;
  double path = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const auto& x = ev.trajectory.back();
    auto next = sys.step(x, controls[i]);
    if (!next) {
      ev.failed_step = i;
      return ev;
    }
    cost += sys.stage_cost(x, controls[i]);
    path = std::max(path, sys.path_violation(x, controls[i]));
    if (!in_control_set(sys, controls[i])) {
      const auto lo = (sys.control_lower() - controls[i]).maxCoeff();
      const auto hi = (controls[i] - sys.control_upper()).maxCoeff();
      path = std::max({path, lo, hi});
    }
    if (!sys.in_state_constraints(*next)) {
      path = std::numeric_limits<double>::infinity();
    }
    ev.trajectory.push_back(std::move(*next));
  }
  ev.defined = true;
  ev.terminal_value = sys.terminal_cost(ev.trajectory.back());
  ev.cost = cost + ev.terminal_value;
  ev.violation = std::max(path, std::max(0.0, ev.terminal_value - sys.terminal_level()));
  return ev;
}

/// V_N(x0; controls).  Throws RolloutFailure when a step is undefined.
template <ManifoldSystem S>
double horizon_cost(const S& sys, const typename S::State& x0,
                    std::span<const typename S::Control> controls) {
  const Evaluation<S> ev = evaluate_sequence(sys, x0, controls);
  if (!ev.defined) {
    throw RolloutFailure(ev.failed_step);
  }
  return ev.cost;
}

/// Drops the first control and appends κ at the previously predicted terminal
/// state.  Feasible at the successor state whenever `previous` was.
template <ManifoldSystem S>
std::vector<typename S::Control> warm_start_shift(const OcpSolution<S>& previous, const S& sys) {
  std::vector<typename S::Control> shifted(previous.controls.begin() + 1,
                                           previous.controls.end());
  shifted.push_back(sys.local_law(previous.predicted.back()));
  return shifted;
}

/// Controls obtained by running κ along the horizon from x0.
template <ManifoldSystem S>
std::vector<typename S::Control> local_law_sequence(const S& sys, const typename S::State& x0,
                                                    int horizon) {
  std::vector<typename S::Control> controls;
  controls.reserve(static_cast<std::size_t>(horizon));
  typename S::State x = x0;
  for (int i = 0; i < horizon; ++i) {
    typename S::Control u = sys.local_law(x).cwiseMax(sys.control_lower()).cwiseMin(sys.control_upper());
    auto next = sys.step(x, u);
    if (!next) {
      u = sys.equilibrium_control();
      next = sys.step(x, u);
    }
    controls.push_back(u);
    if (next) {
      x = std::move(*next);
    }
  }
  return controls;
}

namespace detail {

template <ManifoldSystem S>
class ShootingProblem {
 public:
  using State = typename S::State;
  using Control = typename S::Control;
  static constexpr int kDim = S::kControlDim;

  ShootingProblem(const S& sys, const State& x0, int horizon, const SolverOptions& options)
      : sys_(sys),
        x0_(x0),
        horizon_(horizon),
        options_(options),
        lower_(stack_bound(sys.control_lower(), horizon)),
        upper_(stack_bound(sys.control_upper(), horizon)),
        inner_level_((1.0 - options.terminal_backoff) * sys.terminal_level()) {}

  Eigen::VectorXd project(const Eigen::VectorXd& z) const { return z.cwiseMax(lower_).cwiseMin(upper_); }

  std::vector<Control> unstack(const Eigen::VectorXd& z) const {
    std::vector<Control> controls(static_cast<std::size_t>(horizon_));
    for (int i = 0; i < horizon_; ++i) {
      controls[static_cast<std::size_t>(i)] = z.template segment<kDim>(kDim * i);
    }
    return controls;
  }

  static Eigen::VectorXd stack(std::span<const Control> controls) {
    Eigen::VectorXd z(kDim * static_cast<Eigen::Index>(controls.size()));
    for (std::size_t i = 0; i < controls.size(); ++i) {
      z.template segment<kDim>(kDim * static_cast<Eigen::Index>(i)) = controls[i];
    }
    return z;
  }

  Evaluation<S> evaluate(const Eigen::VectorXd& z) const {
    const std::vector<Control> controls = unstack(z);
    return evaluate_sequence(sys_, x0_, std::span<const Control>(controls));
  }

  /// Penalized objective Φ = V + μ (max(0, F - c_inner)² + Σ path_i²); +∞ when undefined.
  double merit(const Eigen::VectorXd& z, double mu) { return merit_from(z, mu, 0, x0_, 0.0, 0.0); }

  /// Central differences of Φ.  A perturbation of u_i leaves x_0..x_i unchanged,
  /// so the rollout restarts from the cached prefix.
  Eigen::VectorXd gradient(const Eigen::VectorXd& z, double mu) {
    std::vector<State> prefix_states;
    std::vector<double> prefix_cost;
    std::vector<double> prefix_penalty;
    prefix_states.reserve(static_cast<std::size_t>(horizon_));
    State x = x0_;
    double cost = 0.0;
    double penalty = 0.0;
    for (int i = 0; i < horizon_; ++i) {
      prefix_states.push_back(x);
      prefix_cost.push_back(cost);
      prefix_penalty.push_back(penalty);
      const Control u = z.template segment<kDim>(kDim * i);
      auto next = sys_.step(x, u);
      if (!next) {
        break;
      }
      cost += sys_.stage_cost(x, u);
      const double pv = sys_.path_violation(x, u);
      penalty += pv * pv;
      x = std::move(*next);
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
    Eigen::VectorXd probe = z;
    const double step = options_.fd_step;
    const double centre = merit(z, mu);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const auto i = static_cast<std::size_t>(j / kDim);
      if (i >= prefix_states.size()) {
        break;  // the rollout is already undefined before this control acts
      }
      const auto tail = [&](const Eigen::VectorXd& v) {
        return merit_from(v, mu, static_cast<int>(i), prefix_states[i], prefix_cost[i],
                          prefix_penalty[i]);
      };
      probe(j) = z(j) + step;
      const double plus = tail(probe);
      probe(j) = z(j) - step;
      const double minus = tail(probe);
      probe(j) = z(j);
      if (std::isfinite(plus) && std::isfinite(minus)) {
        grad(j) = (plus - minus) / (2.0 * step);
      } else if (std::isfinite(plus) && std::isfinite(centre)) {
        grad(j) = (plus - centre) / step;
      } else if (std::isfinite(minus) && std::isfinite(centre)) {
        grad(j) = (centre - minus) / step;
      }
    }
    return grad;
  }

  double projected_gradient_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& grad) const {
    if (z.size() == 0) return 0.0;
    return (z - project(z - grad)).cwiseAbs().maxCoeff();
  }

 private:
  double merit_from(const Eigen::VectorXd& z, double mu, int start, const State& x_start,
                    double cost, double penalty) {
    State x = x_start;
    for (int i = start; i < horizon_; ++i) {
      const Control u = z.template segment<kDim>(kDim * i);
      auto next = sys_.step(x, u);
      if (!next) {
        return std::numeric_limits<double>::infinity();
      }
      cost += sys_.stage_cost(x, u);
      const double pv = sys_.path_violation(x, u);
      penalty += pv * pv;
      x = std::move(*next);
    }
    const double terminal = sys_.terminal_cost(x);
    const double excess = std::max(0.0, terminal - inner_level_);
    return cost + terminal + mu * (penalty + excess * excess);
  }

  static Eigen::VectorXd stack_bound(const Control& bound, int horizon) {
    Eigen::VectorXd z(kDim * horizon);
    for (int i = 0; i < horizon; ++i) z.template segment<kDim>(kDim * i) = bound;
    return z;
  }

  const S& sys_;
  const State& x0_;
  int horizon_;
  SolverOptions options_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  double inner_level_;
};

}  // namespace detail

/// Solves the OCP from x0.  Without a warm start the initial guess is the
/// local-law rollout.  The returned solution is the lowest-cost feasible
/// iterate seen, or the last iterate (with feasible = false) if none was
/// feasible.  Throws RolloutFailure if no initial guess has a defined rollout.
template <ManifoldSystem S>
OcpSolution<S> solve_ocp(const S& sys, const typename S::State& x0, const MpcConfig& config,
                         const std::optional<std::vector<typename S::Control>>& warm_start = std::nullopt) {
  using Control = typename S::Control;
  config.validate();
  const SolverOptions& opt = config.solver;
  detail::ShootingProblem<S> problem(sys, x0, config.horizon, opt);

  std::vector<Control> guess;
  if (warm_start && static_cast<int>(warm_start->size()) == config.horizon) {
    guess = *warm_start;
  } else {
    guess = local_law_sequence(sys, x0, config.horizon);
  }
  Eigen::VectorXd z = problem.project(detail::ShootingProblem<S>::stack(guess));
  double mu = opt.penalty_weight;
  if (!std::isfinite(problem.merit(z, mu))) {
    guess.assign(static_cast<std::size_t>(config.horizon), sys.equilibrium_control());
    z = problem.project(detail::ShootingProblem<S>::stack(guess));
    if (!std::isfinite(problem.merit(z, mu))) {
      throw RolloutFailure(problem.evaluate(z).failed_step);
    }
  }

  std::optional<Eigen::VectorXd> best;
  double best_cost = std::numeric_limits<double>::infinity();
  const auto consider = [&](const Eigen::VectorXd& candidate) {
    const Evaluation<S> ev = problem.evaluate(candidate);
    if (ev.defined && ev.violation <= opt.violation_tol && ev.cost < best_cost) {
      best = candidate;
      best_cost = ev.cost;
    }
    return ev;
  };

  Evaluation<S> current = consider(z);
  int iterations = 0;
  double kkt = std::numeric_limits<double>::infinity();
  double alpha = -1.0;

  for (int round = 0; round < opt.max_penalty_rounds; ++round) {
    double phi = problem.merit(z, mu);
    Eigen::VectorXd grad = problem.gradient(z, mu);
    if (alpha <= 0.0) {
      alpha = 1.0 / std::max(1.0, grad.cwiseAbs().maxCoeff());
    }
    for (int it = 0; it < opt.max_iterations; ++it) {
      kkt = problem.projected_gradient_norm(z, grad);
      if (kkt <= opt.grad_tol) {
        break;
      }
      bool accepted = false;
      Eigen::VectorXd z_next;
      double phi_next = phi;
      double trial = alpha;
      for (int bt = 0; bt < opt.max_backtracks; ++bt) {
        z_next = problem.project(z - trial * grad);
        phi_next = problem.merit(z_next, mu);
        if (std::isfinite(phi_next) && phi_next <= phi + opt.armijo_c1 * grad.dot(z_next - z)) {
          accepted = true;
          break;
        }
        trial *= opt.armijo_shrink;
      }
      if (!accepted) {
        break;
      }
      ++iterations;
      const Eigen::VectorXd s = z_next - z;
      Eigen::VectorXd grad_next = problem.gradient(z_next, mu);
      const Eigen::VectorXd y = grad_next - grad;
      const double sy = s.dot(y);
      alpha = sy > 0.0 ? s.squaredNorm() / sy : 4.0 * trial;
      alpha = std::clamp(alpha, 1e-12, 1e12);
      z = std::move(z_next);
      grad = std::move(grad_next);
      phi = phi_next;
      current = consider(z);
    }
    kkt = problem.projected_gradient_norm(z, grad);
    if (current.violation <= opt.violation_tol) {
      break;
    }
    mu *= opt.penalty_growth;
  }

  const bool use_best = best && (current.violation > opt.violation_tol || best_cost < current.cost);
  const Evaluation<S> final_eval = use_best ? problem.evaluate(*best) : current;
  OcpSolution<S> solution;
  solution.controls = problem.unstack(use_best ? *best : z);
  solution.predicted = final_eval.trajectory;
  solution.cost = final_eval.cost;
  solution.terminal_value = final_eval.terminal_value;
  solution.violation = final_eval.violation;
  solution.feasible = final_eval.defined && final_eval.violation <= opt.violation_tol;
  solution.iterations = iterations;
  solution.kkt_residual = kkt;
  return solution;
}

}  // namespace gmpc::mpc
