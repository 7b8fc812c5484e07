#include "gmpc/lgvi.hpp"

#include <cmath>

namespace gmpc::lgvi {

namespace {

using Matrix9 = Eigen::Matrix<double, 9, 9>;
using Vector9 = Eigen::Matrix<double, 9, 1>;

constexpr double kProjectionThreshold = 1e-12;

Matrix3 symmetrize(const Matrix3& a) { return 0.5 * (a + a.transpose()); }

// J² + M²/4, symmetric by construction for skew M.
Matrix3 riccati_constant(const Matrix3& m, const InertiaMatrix& j) {
  return symmetrize(j.squared() + 0.25 * m * m);
}

Matrix3 residual_matrix(const Matrix3& s, const Matrix3& half_m, const Matrix3& constant) {
  return s * s + s * half_m - half_m * s - constant;
}

struct NewtonOutcome {
  Matrix3 s;
  double residual;
  bool converged;
};

NewtonOutcome newton_riccati(const Matrix3& m, const InertiaMatrix& j, const Matrix3& constant,
                             const Eigen::SelfAdjointEigenSolver<Matrix3>& eig,
                             const RiccatiOptions& options) {
  const Matrix3 half_m = 0.5 * m;
  // Iterate towards the absolute tolerance while the residual keeps falling;
  // accept anything at roundoff level relative to ‖J²‖.
  const double acceptable = options.tolerance * std::max(1.0, j.squared().norm());

  const Vector3 roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Matrix3 s = symmetrize(eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose());

  Matrix3 g = residual_matrix(s, half_m, constant);
  double residual = g.norm();
  for (int it = 0; it < options.max_iterations && residual > options.tolerance; ++it) {
    // vec(AΔ + ΔB) = (I ⊗ A + Bᵀ ⊗ I) vec(Δ), column-major vec.
    const Matrix3 a = s - half_m;
    const Matrix3 b = s + half_m;
    Matrix9 op = Matrix9::Zero();
    for (int col = 0; col < 3; ++col) {
      op.block<3, 3>(3 * col, 3 * col) += a;
      for (int row = 0; row < 3; ++row) {
        op.block<3, 3>(3 * row, 3 * col).diagonal().array() += b(col, row);
      }
    }
    const Vector9 rhs = -Eigen::Map<const Vector9>(g.data());
    const Vector9 step = op.partialPivLu().solve(rhs);
    if (!step.allFinite()) {
      break;
    }
    const Matrix3 delta = symmetrize(Eigen::Map<const Matrix3>(step.data()));
    // Damped step: halve until the residual falls.
    bool improved = false;
    double t = 1.0;
    for (int damp = 0; damp < 20 && !improved; ++damp, t *= 0.5) {
      const Matrix3 candidate = s + t * delta;
      const Matrix3 g_next = residual_matrix(candidate, half_m, constant);
      const double next_residual = g_next.norm();
      if (next_residual < residual) {
        s = candidate;
        g = g_next;
        residual = next_residual;
        improved = true;
      }
    }
    if (!improved) {
      break;
    }
  }
  return {s, residual, residual <= acceptable};
}

double min_eigenvalue(const Matrix3& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix3> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

}  // namespace

InertiaMatrix::InertiaMatrix(const Matrix3& j) : j_(j) {
  if (!j.allFinite() || (j - j.transpose()).norm() > 1e-12) {
    throw InvalidInertia("inertia matrix must be finite and symmetric");
  }
  if (min_eigenvalue(j) <= 0.0) {
    throw InvalidInertia("inertia matrix must be positive definite");
  }
  inverse_ = j.inverse();
  squared_ = symmetrize(j * j);
}

InertiaMatrix InertiaMatrix::diagonal(double j1, double j2, double j3) {
  return InertiaMatrix(Vector3{j1, j2, j3}.asDiagonal().toDenseMatrix());
}

Matrix3 momentum_matrix(const SpacecraftState& state, const Vector3& torque, double h,
                        const InertiaMatrix& j) {
  const Matrix3& f = state.f.matrix();
  const Matrix3& jm = j.matrix();
  return jm * f - f.transpose() * jm + h * h * so3::hat(torque);
}

Solvability check_solvability(const Matrix3& m, const InertiaMatrix& j) {
  const double margin = min_eigenvalue(riccati_constant(m, j));
  return {margin >= 0.0, margin};
}

Matrix3 solve_step_riccati(const Matrix3& m, const InertiaMatrix& j,
                           const RiccatiOptions& options) {
  const Matrix3 constant = riccati_constant(m, j);
  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(constant);
  const double margin = eig.eigenvalues()(0);
  if (margin < 0.0) {
    throw NotSolvable(margin);
  }
  const NewtonOutcome out = newton_riccati(m, j, constant, eig, options);
  if (!out.converged) {
    throw NoConvergence("Newton-Riccati iteration stalled at residual " +
                        std::to_string(out.residual));
  }
  return out.s;
}

double riccati_residual(const Matrix3& s, const Matrix3& m, const InertiaMatrix& j) {
  const Matrix3 half_m = 0.5 * m;
  return (half_m * s - s * half_m - s * s + j.squared() + 0.25 * m * m).norm();
}

double implicit_residual(const RotationMatrix& f, const Matrix3& m, const InertiaMatrix& j) {
  const Matrix3& fm = f.matrix();
  return (fm * j.matrix() - j.matrix() * fm.transpose() - m).norm();
}

std::optional<StepResult> try_step(const SpacecraftState& state, const Vector3& torque, double h,
                                   const InertiaMatrix& j, double min_margin) {
  const Matrix3 m = momentum_matrix(state, torque, h, j);
  if (!m.allFinite()) {
    return std::nullopt;
  }
  const Matrix3 constant = riccati_constant(m, j);
  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(constant);
  const double margin = eig.eigenvalues()(0);
  if (margin < min_margin || margin < 0.0) {
    return std::nullopt;
  }
  const NewtonOutcome out = newton_riccati(m, j, constant, eig, RiccatiOptions{});
  if (!out.converged) {
    return std::nullopt;
  }
  const Matrix3 f_next = (0.5 * m + out.s) * j.inverse();
  if (f_next.determinant() <= 0.0) {
    return std::nullopt;
  }
  const double drift = (f_next.transpose() * f_next - Matrix3::Identity()).norm();
  RotationMatrix f_rot;
  if (drift > kProjectionThreshold) {
    try {
      f_rot = so3::project(f_next);
    } catch (const so3::Degenerate&) {
      return std::nullopt;
    }
  } else {
    f_rot = RotationMatrix(f_next);
  }
  return StepResult{{state.g * state.f, f_rot}, margin};
}

SpacecraftState lgvi_step(const SpacecraftState& state, const Vector3& torque, double h,
                          const InertiaMatrix& j) {
  const Matrix3 m = momentum_matrix(state, torque, h, j);
  const Matrix3 s = solve_step_riccati(m, j);
  const Matrix3 f_next = (0.5 * m + s) * j.inverse();
  const double drift = (f_next.transpose() * f_next - Matrix3::Identity()).norm();
  RotationMatrix f_rot = drift > kProjectionThreshold ? so3::project(f_next) : RotationMatrix(f_next);
  return {state.g * state.f, f_rot};
}

std::vector<SpacecraftState> rollout(const SpacecraftState& state0,
                                     std::span<const Vector3> torques, double h,
                                     const InertiaMatrix& j) {
  std::vector<SpacecraftState> states;
  states.reserve(torques.size() + 1);
  states.push_back(state0);
  for (std::size_t i = 0; i < torques.size(); ++i) {
    try {
      states.push_back(lgvi_step(states.back(), torques[i], h, j));
    } catch (const LgviError& e) {
      throw NotSolvableAt(i, e.what());
    } catch (const so3::So3Error& e) {
      throw NotSolvableAt(i, e.what());
    }
  }
  return states;
}

Vector3 spatial_momentum(const SpacecraftState& state, const InertiaMatrix& j) {
  const Matrix3& f = state.f.matrix();
  const Matrix3 a = f * j.matrix() - j.matrix() * f.transpose();
  return state.g * Vector3{a(2, 1), a(0, 2), a(1, 0)};
}

Vector3 body_rate(const RotationMatrix& f, double h, so3::BranchConvention convention) {
  return so3::log(f, convention) / h;
}

}  // namespace gmpc::lgvi
