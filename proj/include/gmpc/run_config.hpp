// JSON run configuration shared by the command-line tool and the experiments.
//
// Every section and key is optional; missing values take the defaults below,
// which describe the rest-to-rest attitude scenario.  Unknown keys are
// rejected so that typos do not silently fall back to defaults.
//
//   {
//     "physical":   {"inertia_kg_m2": [1, 1.2, 1.5], "h_seconds": 0.1},
//     "weights":    {"Q_g": [1, 1, 1], "Q_f": "inertia", "R": [2, 2, 2], "lambda": 0.1},
//     "mpc":        {"horizon_steps": 10, "tau_max_newton_meters": 100,
//                    "min_solvability_margin": 1e-6, "solver": {...}},
//     "design":     {"n_samples": 1000, "shrink": 0.9, "seed": 1},
//     "experiment": {"initial_rotation_axis_angle_rad": [0, 0, 3.141592653589793],
//                    "initial_omega_rad_per_s": [0, 0, 0], "n_steps": 600, "seed": 1,
//                    "convergence_tol_rad": 0.01, "snapshot_interval_seconds": 2.0},
//     "output":     {"directory": "out", "csv_every_steps": 1}
//   }
//
// Matrices are given either as 3x3 nested arrays or as 3-vectors (diagonal).
// "Q_f" also accepts the string "inertia".  "tau_max_newton_meters" accepts
// null for an unbounded torque.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "gmpc/lgvi.hpp"
#include "gmpc/ocp_solver.hpp"
#include "gmpc/so3.hpp"
#include "gmpc/terminal_design.hpp"

namespace gmpc {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentSettings {
  so3::Vector3 initial_rotation = {0.0, 0.0, 3.141592653589793};  // axis-angle, rad
  so3::Vector3 initial_omega = so3::Vector3::Zero();                // rad/s
  std::size_t n_steps = 600;
  std::uint64_t seed = 1;
  double convergence_tol = 1e-2;      // rad
  double snapshot_interval = 2.0;     // s
};

struct OutputSettings {
  std::string directory = "out";
  std::size_t csv_every_steps = 1;
};

struct RunConfig {
  so3::Matrix3 inertia = so3::Vector3{1.0, 1.2, 1.5}.asDiagonal();
  double h = 0.1;
  terminal::StageWeights weights = default_weights();
  int horizon = 10;
  double tau_max = 100.0;
  double min_solvability_margin = 1e-6;
  mpc::SolverOptions solver;
  terminal::CalibrationOptions calibration;
  ExperimentSettings experiment;
  OutputSettings output;

  lgvi::InertiaMatrix inertia_matrix() const { return lgvi::InertiaMatrix(inertia); }
  terminal::LocalLawConstraints constraints() const { return {tau_max, min_solvability_margin}; }
  mpc::MpcConfig mpc_config() const { return {horizon, solver}; }

  /// g₀ = exp(initial_rotation), f₀ = exp(h · initial_omega).
  lgvi::SpacecraftState initial_state() const;

  /// Full snapshot with every default filled in.
  nlohmann::json to_json() const;

  static terminal::StageWeights default_weights();
};

/// Throws ConfigError naming the offending key.
RunConfig parse_run_config(const nlohmann::json& doc);

/// Reads and parses a JSON file.  Throws ConfigError (key "<file>") on I/O or
/// syntax errors.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gmpc
