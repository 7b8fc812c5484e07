// Lie group variational integrator for a rigid body on SO(3).
//
//   g_{k+1} = g_k f_k
//   f_{k+1} J - J f_{k+1}ᵀ = J f_k - f_kᵀ J + h² hat(τ_k)
//
// The implicit second equation is solved by writing f_{k+1} = (M/2 + S) J⁻¹
// with M the right-hand side and S the symmetric solution of
//   S² + S(M/2) - (M/2)S = J² + M²/4,
// which is solvable iff J² + M²/4 is positive semi-definite.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmpc/so3.hpp"

namespace gmpc::lgvi {

using so3::Matrix3;
using so3::RotationMatrix;
using so3::Vector3;

class LgviError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInertia : public LgviError {
 public:
  using LgviError::LgviError;
};

class NotSolvable : public LgviError {
 public:
  explicit NotSolvable(double margin)
      : LgviError("implicit step not solvable: lambda_min(J^2 + M^2/4) = " +
                  std::to_string(margin)),
        margin_(margin) {}
  double margin() const { return margin_; }

 private:
  double margin_;
};

class NoConvergence : public LgviError {
 public:
  using LgviError::LgviError;
};

class NotSolvableAt : public LgviError {
 public:
  NotSolvableAt(std::size_t step, const std::string& what)
      : LgviError("rollout failed at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Symmetric positive-definite 3×3 matrix J of the implicit update.
class InertiaMatrix {
 public:
  explicit InertiaMatrix(const Matrix3& j);
  static InertiaMatrix diagonal(double j1, double j2, double j3);

  const Matrix3& matrix() const { return j_; }
  const Matrix3& inverse() const { return inverse_; }
  const Matrix3& squared() const { return squared_; }

 private:
  Matrix3 j_;
  Matrix3 inverse_;
  Matrix3 squared_;
};

struct SpacecraftState {
  RotationMatrix g;  // attitude
  RotationMatrix f;  // one-step attitude increment

  static SpacecraftState identity() { return {}; }
  bool operator==(const SpacecraftState&) const = default;
};

struct Solvability {
  bool solvable;
  double margin;  // λ_min(J² + M²/4)
};

struct RiccatiOptions {
  double tolerance = 1e-12;  // on ‖G(S)‖_F
  int max_iterations = 100;
};

/// M = J f - fᵀ J + h² hat(τ).
Matrix3 momentum_matrix(const SpacecraftState& state, const Vector3& torque, double h,
                        const InertiaMatrix& j);

Solvability check_solvability(const Matrix3& m, const InertiaMatrix& j);

/// Newton iteration on G(S) = S² + S(M/2) - (M/2)S - J² - M²/4, started at
/// the SPD square root of J² + M²/4.  Each step solves the Sylvester equation
/// (S - M/2)Δ + Δ(S + M/2) = -G(S).
Matrix3 solve_step_riccati(const Matrix3& m, const InertiaMatrix& j,
                           const RiccatiOptions& options = {});

/// ‖(M/2)S - S(M/2) - S² + J² + M²/4‖_F
double riccati_residual(const Matrix3& s, const Matrix3& m, const InertiaMatrix& j);

/// ‖f J - J fᵀ - M‖_F
double implicit_residual(const RotationMatrix& f, const Matrix3& m, const InertiaMatrix& j);

struct StepResult {
  SpacecraftState next;
  double margin;  // λ_min(J² + M²/4) of the step
};

/// Non-throwing step used inside optimization loops.  Returns nullopt when the
/// solvability margin is below `min_margin` or the Newton solve fails.
std::optional<StepResult> try_step(const SpacecraftState& state, const Vector3& torque, double h,
                                   const InertiaMatrix& j, double min_margin = 0.0);

/// One integrator step.  Throws NotSolvable / NoConvergence.
SpacecraftState lgvi_step(const SpacecraftState& state, const Vector3& torque, double h,
                          const InertiaMatrix& j);

/// States x_0..x_n for n torques.  Throws NotSolvableAt(i).
std::vector<SpacecraftState> rollout(const SpacecraftState& state0,
                                     std::span<const Vector3> torques, double h,
                                     const InertiaMatrix& j);

/// Spatial angular momentum g · vee(f J - J fᵀ), conserved when τ ≡ 0.
Vector3 spatial_momentum(const SpacecraftState& state, const InertiaMatrix& j);

/// ω = vee(Log f) / h.
Vector3 body_rate(const RotationMatrix& f, double h,
                  so3::BranchConvention convention = so3::BranchConvention::kNonNegative);

}  // namespace gmpc::lgvi
