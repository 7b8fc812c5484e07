// Executable property suites for the attitude controller: closed loops at the
// Log branch cut, conservation of the integrator, certification of the local
// law, and the cost-decrease audit of closed-loop runs.
//
// Every suite returns an ExperimentReport whose verdicts carry the measured
// worst-case margin next to the threshold it was compared with.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmpc/attitude_system.hpp"
#include "gmpc/closed_loop.hpp"
#include "gmpc/terminal_design.hpp"

namespace gmpc::experiments {

using AttitudeRun = mpc::ClosedLoopRun<AttitudeSystem>;

struct Verdict {
  std::string invariant;
  bool passed = false;
  double margin = 0.0;     // measured value
  double threshold = 0.0;  // value it was compared with
  std::string detail;
  bool required = true;    // informational verdicts do not affect passed()
};

struct ExperimentReport {
  std::string name;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> csv_paths;
  std::vector<Verdict> verdicts;

  bool passed() const;
  const Verdict* find(const std::string& invariant) const;
  nlohmann::json to_json() const;
};

/// Closed loop from (g0, I).
AttitudeRun run_from_rest(const terminal::TerminalDesign& design, const mpc::MpcConfig& config,
                          const so3::RotationMatrix& g0, so3::BranchConvention convention,
                          std::size_t n_steps);

/// max_k ‖τ_a,k − τ_b,k‖_∞ over the common steps.
double max_torque_difference(const AttitudeRun& a, const AttitudeRun& b);

/// z-component of the first torque whose magnitude exceeds `threshold`.
std::optional<double> first_nonzero_torque_z(const AttitudeRun& run, double threshold = 1e-9);

/// Smallest k with d(g_k, I) < tol, if any.
std::optional<std::size_t> attitude_converged_at(const AttitudeRun& run, double tol);

// ---------------------------------------------------------------------------

struct DiscontinuityOptions {
  std::size_t n_steps = 600;
  double convergence_tol = 1e-2;     // on d(g, I), rad
  double snapshot_interval = 2.0;    // s
  double near_fraction = 0.99;       // second start Rz(-near_fraction·π)
  double same_side_offset = 0.01;    // third start Rz(-(near_fraction - offset)·π)
  double locality_bound = 0.1;       // N·m, same-side pair
  double jump_bound = 1.0;           // N·m, straddling pair
  bool swapped_convention = true;    // rerun Rz(π) with the other branch
  std::optional<std::filesystem::path> out_dir;
};

struct DiscontinuityProbe {
  ExperimentReport report;
  AttitudeRun at_cut;                  // Rz(π)
  AttitudeRun near_cut;                // Rz(-0.99π)
  AttitudeRun same_side;               // Rz(-0.98π)
  std::optional<AttitudeRun> swapped;  // Rz(π) with the swapped convention
};

DiscontinuityProbe probe_discontinuity(const terminal::TerminalDesign& design,
                                       const mpc::MpcConfig& config,
                                       const DiscontinuityOptions& options = {});

// ---------------------------------------------------------------------------

struct ConservationOptions {
  std::size_t n_steps = 1000;
  so3::Vector3 omega0 = {0.3, 0.2, 0.1};  // rad/s; f₀ = exp(h·ω₀)
  std::uint64_t seed = 1;                 // draws g₀
  double tolerance = 1e-9;
  double contrast_factor = 100.0;         // Euler drift must exceed this multiple
  std::optional<std::filesystem::path> out_dir;
};

struct ConservationDrift {
  double orthogonality = 0.0;  // max ‖gᵀg − I‖_F
  double momentum = 0.0;       // max ‖π_k − π_0‖ / ‖π_0‖ (absolute when π_0 = 0)
};

/// Free rollout of the integrator.
ConservationDrift conservation_drift(const lgvi::SpacecraftState& x0, double h,
                                     const lgvi::InertiaMatrix& j, std::size_t n_steps);

/// The same motion with explicit Euler on (R, ω): R⁺ = R(I + h hat(ω)),
/// ω⁺ = ω + h J̃⁻¹(J̃ω × ω), where J̃ = tr(J) I - J is the physical inertia
/// of the body whose nonstandard inertia is J.
ConservationDrift euler_drift(const so3::RotationMatrix& g0, const so3::Vector3& omega0, double h,
                              const lgvi::InertiaMatrix& j, std::size_t n_steps);

ExperimentReport verify_conservation(double h, const lgvi::InertiaMatrix& j,
                                     const ConservationOptions& options = {});

// ---------------------------------------------------------------------------

struct CertificationOptions {
  std::size_t n_samples = 1000;
  std::uint64_t seed = 20'240'917;
  double inflation = 100.0;  // negative control: c times this must fail
};

ExperimentReport certify_local_law(const terminal::TerminalDesign& design,
                                   const CertificationOptions& options = {});

// ---------------------------------------------------------------------------

struct LyapunovAudit {
  double chain_margin = -std::numeric_limits<double>::infinity();  // max V_cand⁺ − V* + L
  std::size_t chain_worst_step = 0;
  double candidate_violation = 0.0;  // max violation of the shifted candidates
  double stage_sum = 0.0;            // Σ L(x_k, u_k)
  double initial_value = 0.0;        // V*(x_0)
  double value_increase = 0.0;       // max V*(x_{k+1}) − V*(x_k) + L(x_k, u_k)
};

/// Evaluates the decrease chain on recorded data.
LyapunovAudit audit_run(const AttitudeRun& run);

/// Verdicts for one recorded run; names are prefixed with `label`.
ExperimentReport audit_lyapunov(const AttitudeRun& run, const std::string& label = "",
                                double tolerance = 1e-8);

struct LyapunovSuiteOptions {
  std::size_t n_steps = 200;
  double tolerance = 1e-8;
  bool crippled = true;  // also audit a run whose solver stops after one iteration
};

/// Closed loop from x0 with the given solver, audited, plus the crippled rerun.
ExperimentReport lyapunov_suite(const terminal::TerminalDesign& design,
                                const mpc::MpcConfig& config, const lgvi::SpacecraftState& x0,
                                const LyapunovSuiteOptions& options = {});

}  // namespace gmpc::experiments
