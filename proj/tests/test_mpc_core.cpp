#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "gmpc/attitude_system.hpp"
#include "gmpc/closed_loop.hpp"
#include "gmpc/ocp_solver.hpp"
#include "gmpc/terminal_design.hpp"
#include "support/double_integrator.hpp"

namespace {

namespace lgvi = gmpc::lgvi;
namespace mpc = gmpc::mpc;
namespace so3 = gmpc::so3;
namespace terminal = gmpc::terminal;
using gmpc::AttitudeSystem;
using so3::Matrix3;
using so3::Vector3;
using testing_support::DoubleIntegrator;

constexpr double kPi = std::numbers::pi;
constexpr double kStep = 0.1;
const lgvi::InertiaMatrix kInertia = lgvi::InertiaMatrix::diagonal(1.0, 1.2, 1.5);

terminal::StageWeights reference_weights() {
  terminal::StageWeights w;
  w.q_g = Matrix3::Identity();
  w.q_f = kInertia.matrix();
  w.r = 2.0 * Matrix3::Identity();
  w.lambda = 0.1;
  return w;
}

const terminal::TerminalDesign& reference_design() {
  static const terminal::TerminalDesign design =
      terminal::design_terminal(kStep, kInertia, reference_weights(), {100.0, 1e-6});
  return design;
}

AttitudeSystem attitude() { return AttitudeSystem(reference_design()); }

lgvi::SpacecraftState state_at(const Vector3& rotation, const Vector3& omega) {
  return {so3::exp(rotation), so3::exp(kStep * omega)};
}

Vector3 random_vector(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

double lyapunov_slack(const mpc::ClosedLoopRun<AttitudeSystem>& run, std::size_t k) {
  // V_cand(x_{k+1}) - V*(x_k) + L(x_k, u_k); the candidate at x_{k+1} is
  // stored with step k+1, or as final_candidate after the last step.
  const double next_candidate =
      k + 1 < run.steps.size() ? run.steps[k + 1].v_candidate : run.final_candidate->cost;
  return next_candidate - run.steps[k].v_star + run.steps[k].stage_cost;
}

// ---------------------------------------------------------------------------
// System contract

template <class S>
void expect_equilibrium_contract(const S& sys) {
  const auto xe = sys.equilibrium_state();
  const auto ue = sys.equilibrium_control();
  const auto next = sys.step(xe, ue);
  ASSERT_TRUE(next.has_value());
  EXPECT_LT(sys.distance(*next, xe), 1e-10);
  EXPECT_NEAR(sys.stage_cost(xe, ue), 0.0, 1e-12);
  EXPECT_NEAR(sys.terminal_cost(xe), 0.0, 1e-12);
  EXPECT_LT(sys.local_law(xe).norm(), 1e-12);
  EXPECT_TRUE(mpc::in_control_set(sys, ue));
}

TEST(ManifoldSystemContract, AttitudeEquilibrium) { expect_equilibrium_contract(attitude()); }

TEST(ManifoldSystemContract, DoubleIntegratorEquilibrium) {
  expect_equilibrium_contract(DoubleIntegrator());
}

TEST(ManifoldSystemContract, AttitudeStageCostBoundedBelowByStateTerm) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const lgvi::SpacecraftState x = state_at(random_vector(rng, 3.0), random_vector(rng, 5.0));
    const Vector3 u = random_vector(rng, 50.0);
    const double with_control = sys.stage_cost(x, u);
    const double state_only = sys.stage_cost(x, sys.equilibrium_control());
    EXPECT_GE(with_control, state_only - 1e-12);
    EXPECT_GE(state_only, 0.0);
    if (sys.distance(x, sys.equilibrium_state()) > 1e-3) {
      EXPECT_GT(state_only, 0.0);
    }
  }
}

TEST(ManifoldSystemContract, AttitudeDistanceIsAMetric) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = state_at(random_vector(rng, 2.0), random_vector(rng, 3.0));
    const auto b = state_at(random_vector(rng, 2.0), random_vector(rng, 3.0));
    const auto c = state_at(random_vector(rng, 2.0), random_vector(rng, 3.0));
    EXPECT_NEAR(sys.distance(a, a), 0.0, 1e-7);
    EXPECT_NEAR(sys.distance(a, b), sys.distance(b, a), 1e-12);
    EXPECT_LE(sys.distance(a, c), sys.distance(a, b) + sys.distance(b, c) + 1e-12);
  }
}

TEST(ManifoldSystemContract, SolvabilityShortfallIsReported) {
  const AttitudeSystem sys = attitude();
  EXPECT_EQ(sys.path_violation(sys.equilibrium_state(), Vector3(1.0, -2.0, 0.5)), 0.0);
  // |h²τ| near 2√λ_min(J²) leaves a margin below the required 1e-6 but still
  // positive: the step is defined yet penalized.
  const double edge = 2.0 / (kStep * kStep);
  const Vector3 tau(0.0, 0.0, edge * 0.999999999);
  EXPECT_TRUE(sys.step(sys.equilibrium_state(), tau).has_value());
  EXPECT_GT(sys.path_violation(sys.equilibrium_state(), tau), 0.0);
}

// ---------------------------------------------------------------------------
// Horizon cost

TEST(HorizonCost, ZeroAtEquilibrium) {
  const AttitudeSystem sys = attitude();
  const std::vector<Vector3> zeros(10, Vector3::Zero());
  EXPECT_NEAR(mpc::horizon_cost(sys, sys.equilibrium_state(), std::span<const Vector3>(zeros)), 0.0,
              1e-12);
}

TEST(HorizonCost, AttitudeTermAtHalfTurn) {
  const AttitudeSystem sys = attitude();
  const lgvi::SpacecraftState x0{so3::rot_z(kPi), so3::RotationMatrix::identity()};
  const std::vector<Vector3> controls{Vector3::Zero()};
  const auto ev = mpc::evaluate_sequence(sys, x0, std::span<const Vector3>(controls));
  ASSERT_TRUE(ev.defined);
  // tr(I - Rz(π)) = 4 and the velocity and control terms vanish.
  EXPECT_NEAR(mpc::horizon_cost(sys, x0, std::span<const Vector3>(controls)) - ev.terminal_value,
              4.0, 1e-12);
}

TEST(HorizonCost, ControlTerm) {
  const AttitudeSystem sys = attitude();
  const std::vector<Vector3> controls{Vector3(0.0, 0.0, 1.0)};
  const auto ev =
      mpc::evaluate_sequence(sys, sys.equilibrium_state(), std::span<const Vector3>(controls));
  ASSERT_TRUE(ev.defined);
  // ½ tr(hat(τ)ᵀ 2I hat(τ)) = 2|τ|².
  EXPECT_NEAR(ev.cost - ev.terminal_value, 2.0, 1e-12);
}

TEST(HorizonCost, UndefinedStepThrows) {
  const AttitudeSystem sys = attitude();
  const std::vector<Vector3> controls{Vector3::Zero(), Vector3::Constant(1e4), Vector3::Zero()};
  try {
    mpc::horizon_cost(sys, sys.equilibrium_state(), std::span<const Vector3>(controls));
    FAIL() << "expected RolloutFailure";
  } catch (const mpc::RolloutFailure& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(HorizonCost, MatchesExplicitSum) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(21);
  const auto x0 = state_at(random_vector(rng, 1.0), random_vector(rng, 1.0));
  std::vector<Vector3> controls;
  for (int i = 0; i < 7; ++i) controls.push_back(random_vector(rng, 3.0));
  const auto states = lgvi::rollout(x0, std::span<const Vector3>(controls), kStep, kInertia);
  double expected = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    expected += terminal::stage_cost(states[i], controls[i], reference_weights(), kStep);
  }
  expected += terminal::terminal_cost(states.back(), reference_design());
  EXPECT_NEAR(mpc::horizon_cost(sys, x0, std::span<const Vector3>(controls)), expected,
              1e-12 * std::max(1.0, expected));
}

// ---------------------------------------------------------------------------
// Configuration

TEST(MpcConfig, RejectsBadValues) {
  mpc::MpcConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.horizon = 0;
  EXPECT_THROW(cfg.validate(), mpc::InvalidConfig);
  cfg = {};
  cfg.solver.grad_tol = -1.0;
  EXPECT_THROW(cfg.validate(), mpc::InvalidConfig);
  cfg = {};
  cfg.solver.terminal_backoff = 1.0;
  EXPECT_THROW(cfg.validate(), mpc::InvalidConfig);
  EXPECT_THROW(mpc::MpcController<DoubleIntegrator>(DoubleIntegrator(), mpc::MpcConfig{0, {}}),
               mpc::InvalidConfig);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient against exact derivatives

TEST(ShootingGradient, MatchesAdjointOnDoubleIntegrator) {
  const DoubleIntegrator sys;
  const Eigen::Vector2d x0(1.3, -0.4);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const int n = 8;
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = u(rng);
  mpc::SolverOptions opt;
  mpc::detail::ShootingProblem<DoubleIntegrator> problem(sys, x0, n, opt);
  const Eigen::VectorXd fd = problem.gradient(z, 0.0);
  const Eigen::VectorXd exact = testing_support::adjoint_gradient(sys, x0, z);
  EXPECT_LT((fd - exact).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, exact.cwiseAbs().maxCoeff()));
}

// Forward tangent of the integrator along a perturbation of the torques,
// with g ↦ g·exp(hat(α)) and f ↦ f·exp(hat(β)):
//   α⁺ = fᵀα + β,
//   f⁺ hat(β⁺) J + J hat(β⁺) f⁺ᵀ = J f hat(β) + hat(β) fᵀ J + h² hat(δτ).
double directional_derivative(const AttitudeSystem& sys, const lgvi::SpacecraftState& x0,
                              const std::vector<Vector3>& controls,
                              const std::vector<Vector3>& direction) {
  const terminal::TerminalDesign& d = sys.design();
  const Matrix3& jm = d.j.matrix();
  const double h = d.h;
  const auto states = lgvi::rollout(x0, std::span<const Vector3>(controls), h, d.j);
  const Matrix3 r_tilde = d.weights.r.trace() * Matrix3::Identity() - d.weights.r;

  const auto inv_right_jacobian = [](const Vector3& phi) {
    const double theta = phi.norm();
    const Matrix3 p = so3::hat(phi);
    if (theta < 1e-8) return Matrix3(Matrix3::Identity() + 0.5 * p);
    const double coeff =
        1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    return Matrix3(Matrix3::Identity() + 0.5 * p + coeff * p * p);
  };

  Vector3 alpha = Vector3::Zero();
  Vector3 beta = Vector3::Zero();
  double derivative = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const Matrix3& g = states[i].g.matrix();
    const Matrix3& f = states[i].f.matrix();
    derivative += -(d.weights.q_g * g * so3::hat(alpha)).trace() -
                  (d.weights.q_f * f * so3::hat(beta)).trace() / (h * h) +
                  controls[i].dot(r_tilde * direction[i]);
    const Matrix3 dm =
        jm * f * so3::hat(beta) + so3::hat(beta) * f.transpose() * jm + h * h * so3::hat(direction[i]);
    const Matrix3& f_next = states[i + 1].f.matrix();
    Matrix3 system;
    for (int k = 0; k < 3; ++k) {
      const Matrix3 e = so3::hat(Vector3::Unit(k));
      system.col(k) = so3::vee(f_next * e * jm + jm * e * f_next.transpose());
    }
    const Vector3 beta_next = system.partialPivLu().solve(so3::vee(dm));
    alpha = f.transpose() * alpha + beta;
    beta = beta_next;
  }
  const lgvi::SpacecraftState& last = states.back();
  const terminal::Vector6 xi = terminal::chart_coordinates(last, h);
  terminal::Vector6 dxi;
  dxi.head<3>() = inv_right_jacobian(xi.head<3>()) * alpha;
  dxi.tail<3>() = inv_right_jacobian(h * xi.tail<3>()) * beta / h;
  derivative += 2.0 * xi.dot(d.p * dxi);
  return derivative;
}

TEST(ShootingGradient, MatchesTangentLinearModelOnSO3) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(32);
  const int n = 6;
  for (int trial = 0; trial < 5; ++trial) {
    const auto x0 = state_at(random_vector(rng, 0.6), random_vector(rng, 0.5));
    std::vector<Vector3> controls;
    for (int i = 0; i < n; ++i) controls.push_back(random_vector(rng, 2.0));
    const Eigen::VectorXd z =
        mpc::detail::ShootingProblem<AttitudeSystem>::stack(std::span<const Vector3>(controls));
    mpc::SolverOptions opt;
    mpc::detail::ShootingProblem<AttitudeSystem> problem(sys, x0, n, opt);
    const Eigen::VectorXd fd = problem.gradient(z, 0.0);

    Eigen::VectorXd exact(3 * n);
    for (int j = 0; j < 3 * n; ++j) {
      std::vector<Vector3> direction(static_cast<std::size_t>(n), Vector3::Zero());
      direction[static_cast<std::size_t>(j / 3)](j % 3) = 1.0;
      exact(j) = directional_derivative(sys, x0, controls, direction);
    }
    const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
    EXPECT_LT((fd - exact).cwiseAbs().maxCoeff(), 1e-5 * scale) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Double integrator against closed-form solutions

mpc::MpcConfig tight_config(int horizon) {
  mpc::MpcConfig cfg;
  cfg.horizon = horizon;
  cfg.solver.grad_tol = 1e-10;
  cfg.solver.max_iterations = 20000;
  return cfg;
}

TEST(DoubleIntegratorOracle, FirstControlMatchesLqr) {
  const DoubleIntegrator sys;
  for (int horizon : {1, 5, 10}) {
    for (const Eigen::Vector2d x0 : {Eigen::Vector2d(1.0, -0.5), Eigen::Vector2d(-3.0, 2.0)}) {
      const auto sol = mpc::solve_ocp(sys, x0, tight_config(horizon));
      ASSERT_TRUE(sol.feasible);
      const double lqr_u = -(sys.k() * x0)(0);
      const double lqr_v = x0.dot(sys.p() * x0);
      EXPECT_LT(std::abs(sol.controls.front()(0) - lqr_u), 1e-4 * std::abs(lqr_u))
          << "N=" << horizon;
      EXPECT_LT(std::abs(sol.cost - lqr_v), 1e-4 * lqr_v) << "N=" << horizon;
    }
  }
}

TEST(DoubleIntegratorOracle, SequenceMatchesCondensedQp) {
  const DoubleIntegrator sys;
  const Eigen::Vector2d x0(2.0, 1.0);
  const int n = 12;
  const auto sol = mpc::solve_ocp(sys, x0, tight_config(n));
  const Eigen::VectorXd expected = testing_support::condensed_qp(sys, x0, n);
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(sol.controls[static_cast<std::size_t>(i)](0), expected(i),
                1e-4 * expected.cwiseAbs().maxCoeff());
  }
}

TEST(DoubleIntegratorOracle, SaturatedOneStepControlIsClamped) {
  // With N = 1 the objective is a convex quadratic in u whose free minimizer
  // is -Kx, so the box-constrained optimum is its clamp.
  const double u_max = 0.1;
  const DoubleIntegrator sys(0.1, u_max);
  for (const Eigen::Vector2d x0 : {Eigen::Vector2d(5.0, 0.0), Eigen::Vector2d(-4.0, 1.0),
                                   Eigen::Vector2d(0.01, 0.0)}) {
    const auto sol = mpc::solve_ocp(sys, x0, tight_config(1));
    const double expected = std::clamp(-(sys.k() * x0)(0), -u_max, u_max);
    EXPECT_NEAR(sol.controls.front()(0), expected, 1e-8);
  }
}

TEST(DoubleIntegratorOracle, UnreachableTerminalSetIsInfeasible) {
  const DoubleIntegrator sys(0.1, 0.01, 1e-6);
  const Eigen::Vector2d x0(10.0, 0.0);
  mpc::MpcConfig cfg;
  cfg.horizon = 1;
  const auto sol = mpc::solve_ocp(sys, x0, cfg);
  EXPECT_FALSE(sol.feasible);
  EXPECT_GT(sol.violation, cfg.solver.violation_tol);

  mpc::MpcController<DoubleIntegrator> controller(sys, cfg);
  EXPECT_THROW(controller.step(x0), mpc::Infeasible);
  try {
    mpc::closed_loop(sys, x0, cfg, {5, 1e-3, false});
    FAIL() << "expected InfeasibleAt";
  } catch (const mpc::InfeasibleAt& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(DoubleIntegratorOracle, ClosedLoopFollowsLqr) {
  const DoubleIntegrator sys;
  Eigen::Vector2d x(1.0, 0.0);
  const auto run = mpc::closed_loop(sys, x, tight_config(5), {50, 1e-6, false});
  for (const auto& s : run.steps) {
    const double lqr_u = -(sys.k() * s.state)(0);
    EXPECT_NEAR(s.control(0), lqr_u, 1e-4 * std::max(1e-3, std::abs(lqr_u)));
  }
}

// ---------------------------------------------------------------------------
// OCP on SO(3)×SO(3)

TEST(SolveOcp, EquilibriumIsOptimal) {
  const AttitudeSystem sys = attitude();
  const auto sol = mpc::solve_ocp(sys, sys.equilibrium_state(), mpc::MpcConfig{});
  ASSERT_TRUE(sol.feasible);
  EXPECT_LT(sol.cost, 1e-8);
  for (const auto& u : sol.controls) EXPECT_LT(u.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SolveOcp, ImprovesOnLocalLawInsideTerminalSet) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(41);
  mpc::MpcConfig cfg;
  cfg.horizon = 5;
  int tested = 0;
  while (tested < 5) {
    const auto x0 = state_at(random_vector(rng, 0.5), random_vector(rng, 0.3));
    if (!mpc::in_terminal_set(sys, x0)) continue;
    ++tested;
    const auto kappa = mpc::local_law_sequence(sys, x0, cfg.horizon);
    const double kappa_cost = mpc::horizon_cost(sys, x0, std::span<const Vector3>(kappa));
    const auto sol = mpc::solve_ocp(sys, x0, cfg);
    ASSERT_TRUE(sol.feasible);
    EXPECT_LE(sol.cost, kappa_cost + 1e-10);
  }
}

TEST(SolveOcp, HalfTurnIsFeasibleAndConsistent) {
  const AttitudeSystem sys = attitude();
  const lgvi::SpacecraftState x0{so3::rot_z(kPi), so3::RotationMatrix::identity()};
  const auto sol = mpc::solve_ocp(sys, x0, mpc::MpcConfig{});
  ASSERT_TRUE(sol.feasible);
  EXPECT_LE(sol.terminal_value, sys.terminal_level());
  EXPECT_GT(sol.cost, 0.0);
  ASSERT_EQ(sol.controls.size(), 10u);
  ASSERT_EQ(sol.predicted.size(), 11u);
  for (const auto& u : sol.controls) EXPECT_TRUE(mpc::in_control_set(sys, u));
  const double recomputed = mpc::horizon_cost(sys, x0, std::span<const Vector3>(sol.controls));
  EXPECT_NEAR(sol.cost, recomputed, 1e-10 * std::max(1.0, recomputed));
  EXPECT_TRUE(sol.predicted.back() ==
              mpc::evaluate_sequence(sys, x0, std::span<const Vector3>(sol.controls)).trajectory.back());
}

TEST(SolveOcp, Deterministic) {
  const AttitudeSystem sys = attitude();
  const auto x0 = state_at({0.3, -1.2, 0.8}, {0.2, 0.1, -0.3});
  const auto a = mpc::solve_ocp(sys, x0, mpc::MpcConfig{});
  const auto b = mpc::solve_ocp(sys, x0, mpc::MpcConfig{});
  ASSERT_EQ(a.controls.size(), b.controls.size());
  for (std::size_t i = 0; i < a.controls.size(); ++i) EXPECT_EQ(a.controls[i], b.controls[i]);
  EXPECT_EQ(a.cost, b.cost);
}

// ---------------------------------------------------------------------------
// Shifted candidate

TEST(WarmStartShift, OneStepHorizonIsLocalLaw) {
  const AttitudeSystem sys = attitude();
  const auto x0 = state_at({0.2, 0.1, -0.1}, {0.1, 0.0, 0.0});
  mpc::MpcConfig cfg;
  cfg.horizon = 1;
  const auto sol = mpc::solve_ocp(sys, x0, cfg);
  const auto shifted = mpc::warm_start_shift(sol, sys);
  ASSERT_EQ(shifted.size(), 1u);
  EXPECT_EQ(shifted.front(), sys.local_law(sol.predicted.back()));
}

TEST(WarmStartShift, CandidateIsFeasibleAndDecreases) {
  const AttitudeSystem sys = attitude();
  std::mt19937_64 rng(51);
  const mpc::MpcConfig cfg;
  for (int trial = 0; trial < 4; ++trial) {
    const auto x0 = state_at(random_vector(rng, 2.0), random_vector(rng, 0.5));
    const auto sol = mpc::solve_ocp(sys, x0, cfg);
    ASSERT_TRUE(sol.feasible);
    const auto x1 = *sys.step(x0, sol.controls.front());
    const auto shifted = mpc::warm_start_shift(sol, sys);
    const auto ev = mpc::evaluate_sequence(sys, x1, std::span<const Vector3>(shifted));
    ASSERT_TRUE(ev.defined);
    EXPECT_LE(ev.terminal_value, sys.terminal_level() + 1e-8);
    EXPECT_LE(ev.violation, cfg.solver.violation_tol);
    EXPECT_LE(ev.cost - sol.cost + sys.stage_cost(x0, sol.controls.front()), 1e-8)
        << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Receding horizon

TEST(MpcController, ZeroControlAtEquilibrium) {
  mpc::MpcController<AttitudeSystem> controller(attitude(), mpc::MpcConfig{});
  const auto out = controller.step(lgvi::SpacecraftState::identity());
  EXPECT_LT(out.control.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_FALSE(out.candidate.has_value());
  const auto second = controller.step(lgvi::SpacecraftState::identity());
  ASSERT_TRUE(second.candidate.has_value());
  EXPECT_TRUE(second.candidate->feasible);
  controller.reset();
  EXPECT_FALSE(controller.step(lgvi::SpacecraftState::identity()).candidate.has_value());
}

TEST(ClosedLoop, StaysAtEquilibrium) {
  const AttitudeSystem sys = attitude();
  const auto run = mpc::closed_loop(sys, sys.equilibrium_state(), mpc::MpcConfig{}, {20, 1e-3, false});
  ASSERT_EQ(run.steps.size(), 20u);
  EXPECT_TRUE(run.converged);
  EXPECT_EQ(run.converged_at, 0u);
  for (const auto& s : run.steps) {
    EXPECT_LT(s.control.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_LT(s.distance, 1e-6);
  }
}

TEST(ClosedLoop, SmallTumbleConvergesWithDecreasingCost) {
  const AttitudeSystem sys = attitude();
  const Vector3 axis = Vector3(1.0, -2.0, 0.5).normalized();
  const auto x0 = state_at(axis * (10.0 * kPi / 180.0), {0.05, -0.02, 0.03});
  const auto run = mpc::closed_loop(sys, x0, mpc::MpcConfig{}, {200, 1e-3, false});
  ASSERT_EQ(run.steps.size(), 200u);
  EXPECT_TRUE(run.converged);
  ASSERT_TRUE(run.final_candidate.has_value());
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    const auto& s = run.steps[k];
    EXPECT_TRUE(s.feasible) << "k=" << k;
    if (k > 0) {
      EXPECT_TRUE(s.candidate_feasible) << "k=" << k;
      EXPECT_LE(s.v_candidate, run.steps[k - 1].v_star + 1e-8) << "k=" << k;
      EXPECT_LE(s.v_star, s.v_candidate + 1e-12) << "k=" << k;
    }
    EXPECT_LE(lyapunov_slack(run, k), 1e-8) << "k=" << k;
  }
}

}  // namespace
