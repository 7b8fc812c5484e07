// Terminal ingredients for attitude MPC: the stage cost, the local chart
// ξ = (Log g, Log f / h), the LQR design on the linearized dynamics, and the
// sampling-based calibration of the terminal level c.
//
// The terminal cost is F(x) = ξᵀPξ and the local law is κ(x) = -Kξ, where P
// solves the discrete algebraic Riccati equation for the Hessian of L/λ at the
// equilibrium.  The terminal set is X_T = {x : F(x) ≤ c}.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gmpc/lgvi.hpp"
#include "gmpc/so3.hpp"

namespace gmpc::terminal {

using so3::Matrix3;
using so3::Vector3;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Matrix63 = Eigen::Matrix<double, 6, 3>;
using Matrix36 = Eigen::Matrix<double, 3, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

class TerminalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidWeights : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class NotPositiveDefinite : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class NoConvergence : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class NotStabilizable : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class SingularInnerMatrix : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class OutOfChart : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

class NoFeasibleC : public TerminalError {
 public:
  using TerminalError::TerminalError;
};

/// tr(Q) I - Q
Matrix3 tilde_transform(const Matrix3& q);

struct SkewTraceSides {
  double lhs;  // tr(hat(a)ᵀ R hat(b))
  double rhs;  // aᵀ (tr(R) I - R) b
};

/// Both sides of the identity that turns trace-form costs into quadratic forms.
SkewTraceSides skew_trace_identity_check(const Vector3& a, const Vector3& b, const Matrix3& r);

struct Linearization {
  Matrix6 a;
  Matrix63 b;
};

/// A = [I hI; 0 I], B = [0; hI].
Linearization build_linearization(double h);

/// Linearization of the integrator at rest for inertia J:
/// A = [I hI; 0 I], B = [0; h J̃⁻¹] with J̃ = tr(J) I - J.
Linearization build_linearization(double h, const lgvi::InertiaMatrix& j);

int controllability_rank(const Linearization& lin);

/// Weights of L(g, f, τ) = tr(Q_g(I - g)) + tr(Q_f(I - f))/h² + ½ tr(hat(τ)ᵀ R hat(τ)).
struct StageWeights {
  Matrix3 q_g = Matrix3::Identity();
  Matrix3 q_f = Matrix3::Identity();
  Matrix3 r = Matrix3::Identity();
  double lambda = 0.1;

  /// Throws InvalidWeights unless Q_g, Q_f, R are SPD and 0 < λ < 1.
  void validate() const;
};

struct QuadraticCostData {
  Matrix6 q;   // (1/λ) blockdiag(Q̃_g, Q̃_f)
  Matrix63 n;  // state/control cross term, zero here
  Matrix3 r;   // (1/λ) R̃
};

QuadraticCostData build_cost_data(const StageWeights& weights);

double stage_cost(const lgvi::SpacecraftState& state, const Vector3& torque,
                  const StageWeights& weights, double h);

// ---------------------------------------------------------------------------
// Discrete algebraic Riccati equation
//   0 = AᵀPA - P + Q - (AᵀPB + N)(BᵀPB + R)⁻¹(AᵀPB + N)ᵀ
// ---------------------------------------------------------------------------

struct DareOptions {
  double tolerance = 1e-12;  // on ‖P_{i+1} - P_i‖_F, relative to max(1, ‖P‖_F)
  long max_iterations = 1'000'000;
};

/// Fixed-point iteration of the Riccati difference equation from P₀ = Q.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& q, const Eigen::MatrixXd& n,
                           const Eigen::MatrixXd& r, const DareOptions& options = {});

double dare_residual(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                     const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                     const Eigen::MatrixXd& n, const Eigen::MatrixXd& r);

/// K = (BᵀPB + R)⁻¹(AᵀPB + N)ᵀ, so that the law is u = -Kx.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b, const Eigen::MatrixXd& n,
                         const Eigen::MatrixXd& r);

double spectral_radius(const Eigen::MatrixXd& m);

Matrix6 solve_dare(const Linearization& lin, const QuadraticCostData& cost,
                   const DareOptions& options = {});
Matrix36 lqr_gain(const Matrix6& p, const Linearization& lin, const QuadraticCostData& cost);

// ---------------------------------------------------------------------------
// Terminal cost, local law, and terminal set
// ---------------------------------------------------------------------------

struct LocalLawConstraints {
  double tau_max = std::numeric_limits<double>::infinity();  // ‖τ‖_∞ bound
  double min_solvability_margin = 1e-6;
};

/// Worst-case margins over a sample set; a condition holds when its margin is
/// ≤ 0 (control, invariance) or ≤ 1e-10 (decrease).
struct Certification {
  std::size_t n_samples = 0;
  double control_margin = -std::numeric_limits<double>::infinity();     // max ‖κ‖_∞ - τ_max
  double invariance_margin = -std::numeric_limits<double>::infinity();  // max F(x⁺) - c
  double decrease_margin = -std::numeric_limits<double>::infinity();    // max F(x⁺) - F(x) + L
  double min_solvability = std::numeric_limits<double>::infinity();
  std::size_t failed_steps = 0;

  double max_violation() const;
  bool passed() const;
};

inline constexpr double kDecreaseTolerance = 1e-10;

struct TerminalDesign {
  double h;
  lgvi::InertiaMatrix j;
  StageWeights weights{};
  LocalLawConstraints constraints{};
  Matrix6 p = Matrix6::Zero();
  Matrix36 k = Matrix36::Zero();
  double c = 0.0;
  double dare_residual = 0.0;
  double closed_loop_radius = 0.0;
  Certification certification{};
};

/// ξ = (Log g, Log f / h).
Vector6 chart_coordinates(const lgvi::SpacecraftState& state, double h,
                          so3::BranchConvention convention = so3::BranchConvention::kNonNegative);

lgvi::SpacecraftState from_chart(const Vector6& xi, double h);

/// F(x) = ξᵀPξ.
double terminal_cost(const lgvi::SpacecraftState& state, const TerminalDesign& design,
                     so3::BranchConvention convention = so3::BranchConvention::kNonNegative);

/// κ(x) = -Kξ.  Throws OutOfChart unless ‖Log g‖ < π and ‖Log f‖ < π.
Vector3 local_law(const lgvi::SpacecraftState& state, const TerminalDesign& design);

/// κ' ∘ Log on all of SO(3)×SO(3), resolving the branch cut by `convention`.
Vector3 local_law_extended(const lgvi::SpacecraftState& state, const TerminalDesign& design,
                           so3::BranchConvention convention = so3::BranchConvention::kNonNegative);

/// Largest level whose ellipsoid ξᵀPξ ≤ c stays inside the chart.
double chart_level(const Matrix6& p, double h);

/// Points of the closed unit ball in R⁶; the first ⌈boundary_fraction·n⌉ lie on
/// the unit sphere.  Deterministic for a given seed.
std::vector<Vector6> sample_unit_ball(std::size_t n, std::uint64_t seed,
                                      double boundary_fraction = 0.5);

/// Checks the local-law conditions on the states ξ = √c · P^{-1/2} z for the
/// given unit-ball points z:
///   κ(x) ∈ U,  F(x⁺) ≤ c,  F(x⁺) - F(x) + L(x, κ(x)) ≤ 1e-10.
Certification check_local_law(const TerminalDesign& design, double c,
                              std::span<const Vector6> unit_points);

struct CalibrationOptions {
  std::size_t n_samples = 1000;
  double shrink = 0.9;
  double c_min = 1e-8;
  int bisection_steps = 40;
  std::uint64_t seed = 1;
};

struct Calibration {
  double c;
  Certification certification{};
};

/// Largest level on a logarithmic bisection over [c_min, chart_level] whose
/// sampled states pass check_local_law, times the safety shrink.  Throws
/// NoFeasibleC when c_min already fails.
Calibration calibrate_c(const TerminalDesign& design, const CalibrationOptions& options = {});

/// linearization → cost data → DARE → gain → calibration.
TerminalDesign design_terminal(double h, const lgvi::InertiaMatrix& j, const StageWeights& weights,
                               const LocalLawConstraints& constraints,
                               const CalibrationOptions& options = {});

}  // namespace gmpc::terminal
