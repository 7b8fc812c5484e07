// Receding-horizon law u_k = u*_{k|k} and the closed-loop driver.
//
// Between calls the controller keeps the previous solution.  Its shifted
// sequence {u*_{k+1|k}, .., u*_{k+N-1|k}, κ(x*_{k+N|k})} is evaluated at the
// new state as the candidate (recorded for auditing) and used as warm start.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmpc/manifold_system.hpp"
#include "gmpc/ocp_solver.hpp"

namespace gmpc::mpc {

class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InfeasibleAt : public Infeasible {
 public:
  explicit InfeasibleAt(std::size_t k)
      : Infeasible("OCP infeasible at closed-loop step " + std::to_string(k)), k_(k) {}
  std::size_t step() const { return k_; }

 private:
  std::size_t k_;
};

/// The shifted candidate at the current state.
struct CandidateInfo {
  double cost = std::numeric_limits<double>::quiet_NaN();
  double terminal_value = std::numeric_limits<double>::quiet_NaN();
  double violation = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

template <ManifoldSystem S>
class MpcController {
 public:
  using State = typename S::State;
  using Control = typename S::Control;

  struct Step {
    Control control;
    OcpSolution<S> solution;
    std::optional<CandidateInfo> candidate;
  };

  MpcController(S system, MpcConfig config) : system_(std::move(system)), config_(config) {
    config_.validate();
  }

  /// Solves the OCP at x and returns its first control.  Throws Infeasible.
  Step step(const State& x) {
    std::optional<std::vector<Control>> warm;
    std::optional<CandidateInfo> candidate;
    if (previous_ && previous_->feasible) {
      warm = warm_start_shift(*previous_, system_);
      const Evaluation<S> ev = evaluate_sequence(system_, x, std::span<const Control>(*warm));
      CandidateInfo info;
      if (ev.defined) {
        info.cost = ev.cost;
        info.terminal_value = ev.terminal_value;
        info.violation = ev.violation;
        info.feasible = ev.violation <= config_.solver.violation_tol;
      }
      candidate = info;
    }
    OcpSolution<S> solution = solve_ocp(system_, x, config_, warm);
    if (!solution.feasible) {
      throw Infeasible("no feasible control sequence found (state outside the feasible region)");
    }
    previous_ = solution;
    return {solution.controls.front(), std::move(solution), candidate};
  }

  void reset() { previous_.reset(); }

  const S& system() const { return system_; }
  const MpcConfig& config() const { return config_; }

 private:
  S system_;
  MpcConfig config_;
  std::optional<OcpSolution<S>> previous_;
};

template <ManifoldSystem S>
struct StepRecord {
  std::size_t k = 0;
  typename S::State state;
  typename S::Control control;
  double v_star = 0.0;
  double v_candidate = std::numeric_limits<double>::quiet_NaN();  // NaN at k = 0
  double candidate_violation = std::numeric_limits<double>::quiet_NaN();
  bool candidate_feasible = false;
  double stage_cost = 0.0;
  double terminal_value = 0.0;
  bool feasible = false;
  double violation = 0.0;
  int iterations = 0;
  double distance = 0.0;  // d(x_k, x_e)
};

template <ManifoldSystem S>
struct ClosedLoopRun {
  std::vector<StepRecord<S>> steps;
  typename S::State final_state;
  std::optional<CandidateInfo> final_candidate;  // candidate at final_state
  bool converged = false;
  std::optional<std::size_t> converged_at;
};

struct ClosedLoopOptions {
  std::size_t n_steps = 100;
  double convergence_tol = 1e-3;
  bool stop_on_convergence = false;
};

/// Runs the MPC law for n_steps from x0.  Throws InfeasibleAt(k).
template <ManifoldSystem S>
ClosedLoopRun<S> closed_loop(const S& system, const typename S::State& x0, const MpcConfig& config,
                             const ClosedLoopOptions& options) {
  MpcController<S> controller(system, config);
  ClosedLoopRun<S> run;
  typename S::State x = x0;
  const typename S::State xe = system.equilibrium_state();
  std::optional<CandidateInfo> pending;
  for (std::size_t k = 0; k < options.n_steps; ++k) {
    const double dist = system.distance(x, xe);
    if (dist < options.convergence_tol && !run.converged_at) {
      run.converged_at = k;
      if (options.stop_on_convergence) {
        break;
      }
    }
    typename MpcController<S>::Step out;
    try {
      out = controller.step(x);
    } catch (const Infeasible&) {
      throw InfeasibleAt(k);
    } catch (const RolloutFailure&) {
      throw InfeasibleAt(k);
    }
    StepRecord<S> rec;
    rec.k = k;
    rec.state = x;
    rec.control = out.control;
    rec.v_star = out.solution.cost;
    if (out.candidate) {
      rec.v_candidate = out.candidate->cost;
      rec.candidate_violation = out.candidate->violation;
      rec.candidate_feasible = out.candidate->feasible;
    }
    rec.stage_cost = system.stage_cost(x, out.control);
    rec.terminal_value = out.solution.terminal_value;
    rec.feasible = out.solution.feasible;
    rec.violation = out.solution.violation;
    rec.iterations = out.solution.iterations;
    rec.distance = dist;
    run.steps.push_back(std::move(rec));

    auto next = system.step(x, out.control);
    if (!next) {
      throw InfeasibleAt(k);
    }
    x = std::move(*next);
    // Candidate at the successor, for the decrease audit of the last step.
    const auto shifted = warm_start_shift(out.solution, system);
    const Evaluation<S> ev = evaluate_sequence(system, x, std::span<const typename S::Control>(shifted));
    CandidateInfo info;
    if (ev.defined) {
      info = {ev.cost, ev.terminal_value, ev.violation, ev.violation <= config.solver.violation_tol};
    }
    pending = info;
  }
  run.final_state = x;
  run.final_candidate = pending;
  if (!run.converged_at && system.distance(x, xe) < options.convergence_tol) {
    run.converged_at = run.steps.size();
  }
  run.converged = run.converged_at.has_value();
  return run;
}

}  // namespace gmpc::mpc
