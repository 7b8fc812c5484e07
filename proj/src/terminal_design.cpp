#include "gmpc/terminal_design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace gmpc::terminal {

namespace {

using Eigen::MatrixXd;

bool is_spd(const Matrix3& m) {
  if ((m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix3> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0) > 0.0;
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Matrix6 inverse_sqrt(const Matrix6& p) {
  Eigen::SelfAdjointEigenSolver<Matrix6> eig(p);
  const Vector6 scale = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Matrix3 tilde_transform(const Matrix3& q) { return q.trace() * Matrix3::Identity() - q; }

SkewTraceSides skew_trace_identity_check(const Vector3& a, const Vector3& b, const Matrix3& r) {
  const double lhs = (so3::hat(a).transpose() * r * so3::hat(b)).trace();
  const double rhs = a.dot(tilde_transform(r) * b);
  return {lhs, rhs};
}

Linearization build_linearization(double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("step h must be positive");
  }
  Linearization lin;
  lin.a.setIdentity();
  lin.a.topRightCorner<3, 3>() = h * Matrix3::Identity();
  lin.b.setZero();
  lin.b.bottomRows<3>() = h * Matrix3::Identity();
  return lin;
}

Linearization build_linearization(double h, const lgvi::InertiaMatrix& j) {
  Linearization lin = build_linearization(h);
  lin.b.bottomRows<3>() = h * tilde_transform(j.matrix()).inverse();
  return lin;
}

int controllability_rank(const Linearization& lin) {
  Eigen::Matrix<double, 6, 18> ctrb;
  Matrix63 block = lin.b;
  for (int i = 0; i < 6; ++i) {
    ctrb.middleCols<3>(3 * i) = block;
    block = lin.a * block;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 6, 18>> lu(ctrb);
  return static_cast<int>(lu.rank());
}

void StageWeights::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw InvalidWeights("lambda must lie in (0, 1), got " + std::to_string(lambda));
  }
  if (!is_spd(q_g)) throw InvalidWeights("Q_g must be symmetric positive definite");
  if (!is_spd(q_f)) throw InvalidWeights("Q_f must be symmetric positive definite");
  if (!is_spd(r)) throw InvalidWeights("R must be symmetric positive definite");
}

QuadraticCostData build_cost_data(const StageWeights& weights) {
  weights.validate();
  const Matrix3 qg = tilde_transform(weights.q_g);
  const Matrix3 qf = tilde_transform(weights.q_f);
  const Matrix3 rt = tilde_transform(weights.r);
  if (!is_spd(qg)) throw NotPositiveDefinite("tilde(Q_g) is not positive definite");
  if (!is_spd(qf)) throw NotPositiveDefinite("tilde(Q_f) is not positive definite");
  if (!is_spd(rt)) throw NotPositiveDefinite("tilde(R) is not positive definite");

  QuadraticCostData cost;
  cost.q.setZero();
  cost.q.topLeftCorner<3, 3>() = qg / weights.lambda;
  cost.q.bottomRightCorner<3, 3>() = qf / weights.lambda;
  cost.n.setZero();
  cost.r = rt / weights.lambda;
  return cost;
}

double stage_cost(const lgvi::SpacecraftState& state, const Vector3& torque,
                  const StageWeights& weights, double h) {
  const Matrix3 eye = Matrix3::Identity();
  const Matrix3 u = so3::hat(torque);
  return (weights.q_g * (eye - state.g.matrix())).trace() +
         (weights.q_f * (eye - state.f.matrix())).trace() / (h * h) +
         0.5 * (u.transpose() * weights.r * u).trace();
}

MatrixXd solve_dare(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q, const MatrixXd& n,
                    const MatrixXd& r, const DareOptions& options) {
  const double blowup = 1e12 * std::max(1.0, q.norm() + r.norm());
  MatrixXd p = q;
  for (long it = 0; it < options.max_iterations; ++it) {
    const MatrixXd inner = b.transpose() * p * b + r;
    const MatrixXd cross = a.transpose() * p * b + n;
    Eigen::LDLT<MatrixXd> ldlt(inner);
    if (ldlt.info() != Eigen::Success) {
      throw SingularInnerMatrix("B'PB + R is singular during Riccati iteration");
    }
    const MatrixXd next =
        symmetrize(a.transpose() * p * a + q - cross * ldlt.solve(cross.transpose()));
    if (!next.allFinite() || next.norm() > blowup) {
      throw NotStabilizable("Riccati iteration diverged");
    }
    const double change = (next - p).norm();
    p = next;
    if (change <= options.tolerance * std::max(1.0, p.norm())) {
      Eigen::LLT<MatrixXd> llt(p);
      if (llt.info() != Eigen::Success) {
        throw NotStabilizable("Riccati solution is not positive definite");
      }
      const MatrixXd k = lqr_gain(p, a, b, n, r);
      if (spectral_radius(a - b * k) >= 1.0) {
        throw NotStabilizable("LQR closed loop is not Schur stable");
      }
      return p;
    }
  }
  throw NoConvergence("Riccati iteration did not converge in " +
                      std::to_string(options.max_iterations) + " iterations");
}

double dare_residual(const MatrixXd& p, const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                     const MatrixXd& n, const MatrixXd& r) {
  const MatrixXd inner = b.transpose() * p * b + r;
  const MatrixXd cross = a.transpose() * p * b + n;
  return (a.transpose() * p * a - p + q - cross * inner.ldlt().solve(cross.transpose())).norm();
}

MatrixXd lqr_gain(const MatrixXd& p, const MatrixXd& a, const MatrixXd& b, const MatrixXd& n,
                  const MatrixXd& r) {
  const MatrixXd inner = b.transpose() * p * b + r;
  Eigen::LDLT<MatrixXd> ldlt(inner);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array().abs() < 1e-14 * std::max(1.0, inner.norm())).any()) {
    throw SingularInnerMatrix("B'PB + R is not invertible");
  }
  return ldlt.solve((a.transpose() * p * b + n).transpose());
}

double spectral_radius(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> eig(m, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix6 solve_dare(const Linearization& lin, const QuadraticCostData& cost,
                   const DareOptions& options) {
  return solve_dare(lin.a, lin.b, cost.q, cost.n, cost.r, options);
}

Matrix36 lqr_gain(const Matrix6& p, const Linearization& lin, const QuadraticCostData& cost) {
  return lqr_gain(p, lin.a, lin.b, cost.n, cost.r);
}

double Certification::max_violation() const {
  if (failed_steps > 0) {
    return std::numeric_limits<double>::infinity();
  }
  return std::max({control_margin, invariance_margin, decrease_margin});
}

bool Certification::passed() const {
  return failed_steps == 0 && control_margin <= 0.0 && invariance_margin <= 0.0 &&
         decrease_margin <= kDecreaseTolerance;
}

Vector6 chart_coordinates(const lgvi::SpacecraftState& state, double h,
                          so3::BranchConvention convention) {
  Vector6 xi;
  xi.head<3>() = so3::log(state.g, convention);
  xi.tail<3>() = so3::log(state.f, convention) / h;
  return xi;
}

lgvi::SpacecraftState from_chart(const Vector6& xi, double h) {
  return {so3::exp(xi.head<3>()), so3::exp(h * xi.tail<3>())};
}

double terminal_cost(const lgvi::SpacecraftState& state, const TerminalDesign& design,
                     so3::BranchConvention convention) {
  const Vector6 xi = chart_coordinates(state, design.h, convention);
  return xi.dot(design.p * xi);
}

Vector3 local_law(const lgvi::SpacecraftState& state, const TerminalDesign& design) {
  const Vector6 xi = chart_coordinates(state, design.h);
  if (xi.head<3>().norm() >= std::numbers::pi || design.h * xi.tail<3>().norm() >= std::numbers::pi) {
    throw OutOfChart("state lies on the boundary of the logarithmic chart");
  }
  return -design.k * xi;
}

Vector3 local_law_extended(const lgvi::SpacecraftState& state, const TerminalDesign& design,
                           so3::BranchConvention convention) {
  return -design.k * chart_coordinates(state, design.h, convention);
}

double chart_level(const Matrix6& p, double h) {
  const Matrix6 p_inv = p.inverse();
  Eigen::SelfAdjointEigenSolver<Matrix3> zeta(Matrix3(p_inv.topLeftCorner<3, 3>()),
                                             Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Matrix3> omega(Matrix3(p_inv.bottomRightCorner<3, 3>()),
                                              Eigen::EigenvaluesOnly);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return std::min(pi2 / zeta.eigenvalues()(2), pi2 / (h * h * omega.eigenvalues()(2)));
}

std::vector<Vector6> sample_unit_ball(std::size_t n, std::uint64_t seed,
                                      double boundary_fraction) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto on_sphere =
      static_cast<std::size_t>(std::ceil(boundary_fraction * static_cast<double>(n)));
  std::vector<Vector6> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector6 z;
    do {
      for (int k = 0; k < 6; ++k) z(k) = normal(rng);
    } while (z.norm() < 1e-12);
    z.normalize();
    if (i >= on_sphere) {
      z *= std::pow(uniform(rng), 1.0 / 6.0);
    }
    points.push_back(z);
  }
  return points;
}

Certification check_local_law(const TerminalDesign& design, double c,
                              std::span<const Vector6> unit_points) {
  const Matrix6 to_chart = std::sqrt(c) * inverse_sqrt(design.p);
  Certification cert;
  cert.n_samples = unit_points.size();
  for (const Vector6& z : unit_points) {
    const lgvi::SpacecraftState x = from_chart(to_chart * z, design.h);
    const Vector3 tau = local_law_extended(x, design);
    cert.control_margin =
        std::max(cert.control_margin, tau.cwiseAbs().maxCoeff() - design.constraints.tau_max);
    const auto step = lgvi::try_step(x, tau, design.h, design.j,
                                     design.constraints.min_solvability_margin);
    if (!step) {
      ++cert.failed_steps;
      continue;
    }
    cert.min_solvability = std::min(cert.min_solvability, step->margin);
    const double f_now = terminal_cost(x, design);
    const double f_next = terminal_cost(step->next, design);
    const double l = stage_cost(x, tau, design.weights, design.h);
    cert.invariance_margin = std::max(cert.invariance_margin, f_next - c);
    cert.decrease_margin = std::max(cert.decrease_margin, f_next - f_now + l);
  }
  return cert;
}

Calibration calibrate_c(const TerminalDesign& design, const CalibrationOptions& options) {
  const std::vector<Vector6> points = sample_unit_ball(options.n_samples, options.seed);
  const auto passes = [&](double c) { return check_local_law(design, c, points).passed(); };

  double lo = options.c_min;
  double hi = chart_level(design.p, design.h) * (1.0 - 1e-9);
  if (passes(hi)) {
    lo = hi;
  } else {
    if (!passes(lo)) {
      throw NoFeasibleC("local-law conditions fail already at c = " + std::to_string(lo));
    }
    for (int i = 0; i < options.bisection_steps; ++i) {
      const double mid = std::sqrt(lo * hi);
      (passes(mid) ? lo : hi) = mid;
    }
  }
  const double c = options.shrink * lo;
  return {c, check_local_law(design, c, points)};
}

TerminalDesign design_terminal(double h, const lgvi::InertiaMatrix& j, const StageWeights& weights,
                               const LocalLawConstraints& constraints,
                               const CalibrationOptions& options) {
  const Linearization lin = build_linearization(h, j);
  const QuadraticCostData cost = build_cost_data(weights);
  TerminalDesign design{h, j, weights, constraints};
  design.p = solve_dare(lin, cost);
  design.k = lqr_gain(design.p, lin, cost);
  design.dare_residual = dare_residual(design.p, lin.a, lin.b, cost.q, cost.n, cost.r);
  design.closed_loop_radius = spectral_radius(lin.a - lin.b * design.k);
  const Calibration calibration = calibrate_c(design, options);
  design.c = calibration.c;
  design.certification = calibration.certification;
  return design;
}

}  // namespace gmpc::terminal
