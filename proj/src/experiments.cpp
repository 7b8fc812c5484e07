#include "gmpc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "gmpc/serialization.hpp"

namespace gmpc::experiments {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

json vector_json(const so3::Vector3& v) { return {v(0), v(1), v(2)}; }

json mpc_json(const mpc::MpcConfig& c) {
  return {{"horizon_steps", c.horizon},
          {"max_iterations", c.solver.max_iterations},
          {"grad_tol", c.solver.grad_tol},
          {"fd_step", c.solver.fd_step},
          {"penalty_weight", c.solver.penalty_weight},
          {"penalty_growth", c.solver.penalty_growth},
          {"max_penalty_rounds", c.solver.max_penalty_rounds},
          {"violation_tol", c.solver.violation_tol},
          {"terminal_backoff", c.solver.terminal_backoff}};
}

std::string write_run(const std::filesystem::path& dir, const std::string& stem,
                      const AttitudeRun& run, double h, std::vector<std::string>& paths,
                      std::optional<double> snapshot_interval = std::nullopt) {
  std::ostringstream traj;
  io::write_trajectory_csv(traj, run, h);
  const auto traj_path = dir / (stem + "_trajectory.csv");
  io::write_file(traj_path, traj.str());
  paths.push_back(traj_path.string());

  std::ostringstream diag;
  io::write_diagnostics_csv(diag, run, h);
  const auto diag_path = dir / (stem + "_diagnostics.csv");
  io::write_file(diag_path, diag.str());
  paths.push_back(diag_path.string());

  if (snapshot_interval) {
    std::ostringstream snaps;
    io::write_snapshots_csv(snaps, run, h, *snapshot_interval);
    const auto snap_path = dir / (stem + "_snapshots.csv");
    io::write_file(snap_path, snaps.str());
    paths.push_back(snap_path.string());
  }
  return traj_path.string();
}

so3::RotationMatrix random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, std::numbers::pi);
  so3::Vector3 axis(normal(rng), normal(rng), normal(rng));
  return so3::exp(axis.normalized() * uniform(rng));
}

}  // namespace

bool ExperimentReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const Verdict& v) { return !v.required || v.passed; });
}

const Verdict* ExperimentReport::find(const std::string& invariant) const {
  for (const Verdict& v : verdicts) {
    if (v.invariant == invariant) {
      return &v;
    }
  }
  return nullptr;
}

json ExperimentReport::to_json() const {
  json list = json::array();
  for (const Verdict& v : verdicts) {
    list.push_back({{"invariant", v.invariant},
                    {"passed", v.passed},
                    {"margin", std::isfinite(v.margin) ? json(v.margin) : json(nullptr)},
                    {"threshold", std::isfinite(v.threshold) ? json(v.threshold) : json(nullptr)},
                    {"detail", v.detail},
                    {"required", v.required}});
  }
  return {{"name", name},
          {"seed", seed},
          {"config", config},
          {"csv_paths", csv_paths},
          {"verdicts", list},
          {"passed", passed()}};
}

AttitudeRun run_from_rest(const terminal::TerminalDesign& design, const mpc::MpcConfig& config,
                          const so3::RotationMatrix& g0, so3::BranchConvention convention,
                          std::size_t n_steps) {
  const AttitudeSystem system(design, convention);
  const lgvi::SpacecraftState x0{g0, so3::RotationMatrix::identity()};
  return mpc::closed_loop(system, x0, config, {n_steps, 1e-3, false});
}

double max_torque_difference(const AttitudeRun& a, const AttitudeRun& b) {
  const std::size_t n = std::min(a.steps.size(), b.steps.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    worst = std::max(worst, (a.steps[k].control - b.steps[k].control).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::optional<double> first_nonzero_torque_z(const AttitudeRun& run, double threshold) {
  for (const auto& s : run.steps) {
    if (s.control.norm() > threshold) {
      return s.control(2);
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> attitude_converged_at(const AttitudeRun& run, double tol) {
  const so3::RotationMatrix id = so3::RotationMatrix::identity();
  for (const auto& s : run.steps) {
    if (so3::geodesic_distance(s.state.g, id) < tol) {
      return s.k;
    }
  }
  if (so3::geodesic_distance(run.final_state.g, id) < tol) {
    return run.steps.size();
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

DiscontinuityProbe probe_discontinuity(const terminal::TerminalDesign& design,
                                       const mpc::MpcConfig& config,
                                       const DiscontinuityOptions& options) {
  using so3::BranchConvention;
  const double pi = std::numbers::pi;
  const double near_angle = -options.near_fraction * pi;
  const double same_side_angle = -(options.near_fraction - options.same_side_offset) * pi;

  DiscontinuityProbe probe{
      {},
      run_from_rest(design, config, so3::rot_z(pi), BranchConvention::kNonNegative, options.n_steps),
      run_from_rest(design, config, so3::rot_z(near_angle), BranchConvention::kNonNegative,
                    options.n_steps),
      run_from_rest(design, config, so3::rot_z(same_side_angle), BranchConvention::kNonNegative,
                    options.n_steps),
      std::nullopt};
  if (options.swapped_convention) {
    probe.swapped = run_from_rest(design, config, so3::rot_z(pi), BranchConvention::kNonPositive,
                                  options.n_steps);
  }

  ExperimentReport& report = probe.report;
  report.name = "discontinuity";
  report.config = {{"mpc", mpc_json(config)},
                   {"h_seconds", design.h},
                   {"c", design.c},
                   {"n_steps", options.n_steps},
                   {"initial_angles_rad", {pi, near_angle, same_side_angle}},
                   {"convergence_tol_rad", options.convergence_tol},
                   {"snapshot_interval_seconds", options.snapshot_interval}};

  const auto converged = [&](const AttitudeRun& run, const std::string& label) {
    const auto at = attitude_converged_at(run, options.convergence_tol);
    const double final_distance =
        so3::geodesic_distance(run.final_state.g, so3::RotationMatrix::identity());
    report.verdicts.push_back(
        {"convergence " + label, at.has_value(), final_distance, options.convergence_tol,
         at ? "d(g, I) < tol from step " + std::to_string(*at) : "not converged within horizon"});
  };
  converged(probe.at_cut, "Rz(pi)");
  converged(probe.near_cut, "Rz(-0.99pi)");

  const auto tz_cut = first_nonzero_torque_z(probe.at_cut);
  const auto tz_near = first_nonzero_torque_z(probe.near_cut);
  const bool opposite = tz_cut && tz_near && sign(*tz_cut) * sign(*tz_near) < 0;
  report.verdicts.push_back({"opposite first tau_z", opposite,
                             tz_cut && tz_near ? *tz_cut * *tz_near : 0.0, 0.0,
                             "first tau_z: " + (tz_cut ? fmt(*tz_cut) : std::string("none")) +
                                 " vs " + (tz_near ? fmt(*tz_near) : std::string("none"))});

  const double jump = max_torque_difference(probe.at_cut, probe.near_cut);
  report.verdicts.push_back({"straddling pair torque gap", jump > options.jump_bound, jump,
                             options.jump_bound, "max_k |tau_a - tau_b|_inf, must exceed"});
  const double local = max_torque_difference(probe.near_cut, probe.same_side);
  report.verdicts.push_back({"same-side pair torque gap", local <= options.locality_bound, local,
                             options.locality_bound, "max_k |tau_a - tau_b|_inf"});

  if (probe.swapped) {
    const auto tz_swapped = first_nonzero_torque_z(*probe.swapped);
    const bool flipped = tz_cut && tz_swapped && tz_near && sign(*tz_swapped) == -sign(*tz_cut) &&
                         sign(*tz_swapped) == sign(*tz_near);
    report.verdicts.push_back(
        {"swapped convention reverses Rz(pi)", flipped, tz_swapped ? *tz_swapped : 0.0, 0.0,
         "first tau_z with swapped branch: " +
             (tz_swapped ? fmt(*tz_swapped) : std::string("none"))});
  }

  if (options.out_dir) {
    const auto& dir = *options.out_dir;
    write_run(dir, "rz_pi", probe.at_cut, design.h, report.csv_paths, options.snapshot_interval);
    write_run(dir, "rz_minus_near", probe.near_cut, design.h, report.csv_paths,
              options.snapshot_interval);
    write_run(dir, "rz_minus_same_side", probe.same_side, design.h, report.csv_paths);
    if (probe.swapped) {
      write_run(dir, "rz_pi_swapped", *probe.swapped, design.h, report.csv_paths);
    }
  }
  return probe;
}

// ---------------------------------------------------------------------------

ConservationDrift conservation_drift(const lgvi::SpacecraftState& x0, double h,
                                     const lgvi::InertiaMatrix& j, std::size_t n_steps) {
  ConservationDrift drift;
  const so3::Vector3 pi0 = lgvi::spatial_momentum(x0, j);
  const double scale = pi0.norm() > 0.0 ? pi0.norm() : 1.0;
  lgvi::SpacecraftState x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    x = lgvi::lgvi_step(x, so3::Vector3::Zero(), h, j);
    drift.orthogonality = std::max(drift.orthogonality, x.g.orthogonality_error());
    drift.momentum = std::max(drift.momentum, (lgvi::spatial_momentum(x, j) - pi0).norm() / scale);
  }
  return drift;
}

ConservationDrift euler_drift(const so3::RotationMatrix& g0, const so3::Vector3& omega0, double h,
                              const lgvi::InertiaMatrix& j, std::size_t n_steps) {
  ConservationDrift drift;
  so3::Matrix3 r = g0.matrix();
  so3::Vector3 omega = omega0;
  // Physical inertia of the body the integrator models.
  const so3::Matrix3 inertia = j.matrix().trace() * so3::Matrix3::Identity() - j.matrix();
  const so3::Matrix3 inertia_inv = inertia.inverse();
  const so3::Vector3 pi0 = r * inertia * omega;
  const double scale = pi0.norm() > 0.0 ? pi0.norm() : 1.0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const so3::Vector3 body = inertia * omega;
    r = r * (so3::Matrix3::Identity() + h * so3::hat(omega));
    omega = omega + h * inertia_inv * body.cross(omega);
    drift.orthogonality =
        std::max(drift.orthogonality, (r.transpose() * r - so3::Matrix3::Identity()).norm());
    drift.momentum = std::max(drift.momentum, (r * inertia * omega - pi0).norm() / scale);
  }
  return drift;
}

ExperimentReport verify_conservation(double h, const lgvi::InertiaMatrix& j,
                                     const ConservationOptions& options) {
  std::mt19937_64 rng(options.seed);
  const so3::RotationMatrix g0 = random_rotation(rng);
  const lgvi::SpacecraftState x0{g0, so3::exp(h * options.omega0)};
  const ConservationDrift lgvi_drift = conservation_drift(x0, h, j, options.n_steps);
  const ConservationDrift euler = euler_drift(g0, options.omega0, h, j, options.n_steps);

  ExperimentReport report;
  report.name = "conservation";
  report.seed = options.seed;
  report.config = {{"h_seconds", h},
                   {"n_steps", options.n_steps},
                   {"omega0_rad_per_s", vector_json(options.omega0)},
                   {"g0", io::rotation_json(g0)},
                   {"tolerance", options.tolerance}};
  report.verdicts.push_back({"orthogonality drift", lgvi_drift.orthogonality <= options.tolerance,
                             lgvi_drift.orthogonality, options.tolerance,
                             "max_k |g_k^T g_k - I|_F"});
  report.verdicts.push_back({"spatial momentum drift", lgvi_drift.momentum <= options.tolerance,
                             lgvi_drift.momentum, options.tolerance,
                             "max_k |pi_k - pi_0| / |pi_0|"});
  const double floor = std::max(lgvi_drift.orthogonality, 1e-16);
  const double ratio = euler.orthogonality / floor;
  report.verdicts.push_back(
      {"explicit Euler contrast", ratio >= options.contrast_factor, ratio, options.contrast_factor,
       "Euler orthogonality drift " + fmt(euler.orthogonality) + ", momentum drift " +
           fmt(euler.momentum) + "; ratio to integrator drift"});

  if (options.out_dir) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "k,t,orthogonality_error,momentum_x,momentum_y,momentum_z\n";
    lgvi::SpacecraftState x = x0;
    for (std::size_t k = 0; k <= options.n_steps; ++k) {
      const so3::Vector3 pi = lgvi::spatial_momentum(x, j);
      csv << k << ',' << static_cast<double>(k) * h << ',' << x.g.orthogonality_error() << ','
          << pi(0) << ',' << pi(1) << ',' << pi(2) << '\n';
      if (k < options.n_steps) {
        x = lgvi::lgvi_step(x, so3::Vector3::Zero(), h, j);
      }
    }
    const auto path = *options.out_dir / "conservation.csv";
    io::write_file(path, csv.str());
    report.csv_paths.push_back(path.string());
  }
  return report;
}

// ---------------------------------------------------------------------------

ExperimentReport certify_local_law(const terminal::TerminalDesign& design,
                                   const CertificationOptions& options) {
  std::vector<terminal::Vector6> points = terminal::sample_unit_ball(options.n_samples, options.seed);
  const terminal::Certification cert = terminal::check_local_law(design, design.c, points);

  const std::vector<terminal::Vector6> origin{terminal::Vector6::Zero()};
  const terminal::Certification at_rest = terminal::check_local_law(design, design.c, origin);
  const double inflated_c = design.c * options.inflation;
  const terminal::Certification inflated = terminal::check_local_law(design, inflated_c, points);

  ExperimentReport report;
  report.name = "local-law";
  report.seed = options.seed;
  report.config = {{"c", design.c},
                   {"n_samples", options.n_samples},
                   {"tau_max", std::isfinite(design.constraints.tau_max)
                                   ? json(design.constraints.tau_max)
                                   : json(nullptr)},
                   {"inflation", options.inflation}};
  report.verdicts.push_back({"control bound", cert.control_margin <= 0.0, cert.control_margin, 0.0,
                             "max |kappa(x)|_inf - tau_max"});
  report.verdicts.push_back({"terminal invariance", cert.invariance_margin <= 0.0,
                             cert.invariance_margin, 0.0, "max F(x+) - c"});
  report.verdicts.push_back({"terminal decrease", cert.decrease_margin <= terminal::kDecreaseTolerance,
                             cert.decrease_margin, terminal::kDecreaseTolerance,
                             "max F(x+) - F(x) + L(x, kappa(x))"});
  report.verdicts.push_back({"step solvability", cert.failed_steps == 0,
                             static_cast<double>(cert.failed_steps), 0.0,
                             "steps below the solvability margin; min margin " +
                                 fmt(cert.min_solvability)});
  report.verdicts.push_back({"equilibrium sample", at_rest.passed() && at_rest.decrease_margin == 0.0,
                             at_rest.decrease_margin, 0.0, "decrease term at x_e"});
  const bool violations_appear = !inflated.passed();
  report.verdicts.push_back({"inflated level fails", violations_appear, inflated.max_violation(), 0.0,
                             "c x " + fmt(options.inflation) + ": decrease margin " +
                                 fmt(inflated.decrease_margin) + ", invariance margin " +
                                 fmt(inflated.invariance_margin) + ", failed steps " +
                                 std::to_string(inflated.failed_steps)});
  return report;
}

// ---------------------------------------------------------------------------

LyapunovAudit audit_run(const AttitudeRun& run) {
  LyapunovAudit audit;
  if (run.steps.empty()) {
    audit.chain_margin = 0.0;
    return audit;
  }
  audit.initial_value = run.steps.front().v_star;
  audit.value_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < run.steps.size(); ++k) {
    const auto& s = run.steps[k];
    audit.stage_sum += s.stage_cost;
    double candidate_next;
    double candidate_violation;
    if (k + 1 < run.steps.size()) {
      candidate_next = run.steps[k + 1].v_candidate;
      candidate_violation = run.steps[k + 1].candidate_violation;
      audit.value_increase =
          std::max(audit.value_increase, run.steps[k + 1].v_star - s.v_star + s.stage_cost);
    } else if (run.final_candidate) {
      candidate_next = run.final_candidate->cost;
      candidate_violation = run.final_candidate->violation;
    } else {
      continue;
    }
    if (std::isnan(candidate_next) || std::isnan(candidate_violation)) {
      candidate_next = std::numeric_limits<double>::infinity();  // candidate rollout undefined
      candidate_violation = std::numeric_limits<double>::infinity();
    }
    const double margin = candidate_next - s.v_star + s.stage_cost;
    if (margin > audit.chain_margin) {
      audit.chain_margin = margin;
      audit.chain_worst_step = k;
    }
    audit.candidate_violation = std::max(audit.candidate_violation, candidate_violation);
  }
  if (!std::isfinite(audit.value_increase)) {
    audit.value_increase = 0.0;
  }
  return audit;
}

ExperimentReport audit_lyapunov(const AttitudeRun& run, const std::string& label,
                                double tolerance) {
  const LyapunovAudit audit = audit_run(run);
  const std::string prefix = label.empty() ? "" : label + ": ";
  ExperimentReport report;
  report.name = "lyapunov";
  report.config = {{"n_steps", run.steps.size()}, {"tolerance", tolerance}};
  report.verdicts.push_back({prefix + "recursive feasibility", audit.candidate_violation <= tolerance,
                             audit.candidate_violation, tolerance,
                             "max violation of the shifted candidate at x_{k+1}"});
  report.verdicts.push_back({prefix + "candidate decrease", audit.chain_margin <= tolerance,
                             audit.chain_margin, tolerance,
                             "max_k V_cand(x_{k+1}) - V*(x_k) + L(x_k, u_k), worst at k = " +
                                 std::to_string(audit.chain_worst_step)});
  report.verdicts.push_back({prefix + "stage cost summability",
                             audit.stage_sum <= audit.initial_value + tolerance, audit.stage_sum,
                             audit.initial_value + tolerance, "sum_k L(x_k, u_k) vs V*(x_0)"});
  report.verdicts.push_back({prefix + "optimal value decrease", audit.value_increase <= tolerance,
                             audit.value_increase, tolerance,
                             "max_k V*(x_{k+1}) - V*(x_k) + L(x_k, u_k); depends on the solver",
                             false});
  return report;
}

ExperimentReport lyapunov_suite(const terminal::TerminalDesign& design,
                                const mpc::MpcConfig& config, const lgvi::SpacecraftState& x0,
                                const LyapunovSuiteOptions& options) {
  const AttitudeSystem system(design);
  const AttitudeRun run = mpc::closed_loop(system, x0, config, {options.n_steps, 1e-3, false});
  ExperimentReport report = audit_lyapunov(run, "full solver", options.tolerance);
  report.config = {{"mpc", mpc_json(config)},
                   {"n_steps", options.n_steps},
                   {"tolerance", options.tolerance},
                   {"g0", io::rotation_json(x0.g)},
                   {"f0", io::rotation_json(x0.f)}};
  if (options.crippled) {
    mpc::MpcConfig crippled = config;
    crippled.solver.max_iterations = 1;
    crippled.solver.max_penalty_rounds = 1;
    const AttitudeRun weak = mpc::closed_loop(system, x0, crippled, {options.n_steps, 1e-3, false});
    const ExperimentReport weak_report = audit_lyapunov(weak, "one-iteration solver", options.tolerance);
    report.verdicts.insert(report.verdicts.end(), weak_report.verdicts.begin(),
                           weak_report.verdicts.end());
  }
  return report;
}

}  // namespace gmpc::experiments
