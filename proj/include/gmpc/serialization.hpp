// JSON and CSV output.
//
// Rotations are written as row-major 9-tuples.  Design files contain
//   {h, J, Q_g, Q_f, R, lambda, tau_max, min_solvability_margin,
//    P (36, row-major), K (18, row-major), c, dare_residual,
//    closed_loop_radius, certification {...}, config {...}}
// and are written with sorted keys so that equal designs give equal bytes.

#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "gmpc/attitude_system.hpp"
#include "gmpc/closed_loop.hpp"
#include "gmpc/terminal_design.hpp"

namespace gmpc::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AttitudeRun = mpc::ClosedLoopRun<AttitudeSystem>;

nlohmann::json rotation_json(const so3::RotationMatrix& r);

nlohmann::json design_to_json(const terminal::TerminalDesign& design, const nlohmann::json& config);

/// Inverse of design_to_json.  Throws FormatError on missing or malformed fields.
terminal::TerminalDesign design_from_json(const nlohmann::json& doc);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Throws FormatError when the file is missing or not valid JSON.
nlohmann::json read_json(const std::filesystem::path& path);

/// k, t, g (9), f (9), ω (3), τ (3).  The last row is the final state and has
/// empty torque fields.
void write_trajectory_csv(std::ostream& out, const AttitudeRun& run, double h,
                          std::size_t every = 1);

/// k, t, V_star, V_candidate, L, F_terminal, feasible, penalty_violation, solver_iters.
void write_diagnostics_csv(std::ostream& out, const AttitudeRun& run, double h,
                           std::size_t every = 1);

/// t, g (9) at multiples of `interval` seconds.
void write_snapshots_csv(std::ostream& out, const AttitudeRun& run, double h, double interval);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace gmpc::io
