#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gmpc/attitude_system.hpp"
#include "gmpc/closed_loop.hpp"
#include "gmpc/run_config.hpp"
#include "gmpc/serialization.hpp"

namespace {

using gmpc::ConfigError;
using gmpc::RunConfig;
using nlohmann::json;
namespace io = gmpc::io;
namespace so3 = gmpc::so3;
namespace terminal = gmpc::terminal;
using so3::Matrix3;
using so3::Vector3;

std::string error_key(const json& doc) {
  try {
    gmpc::parse_run_config(doc);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

const terminal::TerminalDesign& default_design() {
  static const terminal::TerminalDesign design = [] {
    const RunConfig cfg;
    return terminal::design_terminal(cfg.h, cfg.inertia_matrix(), cfg.weights, cfg.constraints(),
                                     cfg.calibration);
  }();
  return design;
}

// ---------------------------------------------------------------------------
// Run configuration

TEST(RunConfig, EmptyDocumentGivesDefaults) {
  const RunConfig cfg = gmpc::parse_run_config(json::object());
  EXPECT_EQ(cfg.inertia, Matrix3(Vector3(1.0, 1.2, 1.5).asDiagonal()));
  EXPECT_EQ(cfg.h, 0.1);
  EXPECT_EQ(cfg.weights.q_g, Matrix3::Identity());
  EXPECT_EQ(cfg.weights.q_f, cfg.inertia);
  EXPECT_EQ(cfg.weights.r, 2.0 * Matrix3::Identity());
  EXPECT_EQ(cfg.weights.lambda, 0.1);
  EXPECT_EQ(cfg.horizon, 10);
  EXPECT_EQ(cfg.tau_max, 100.0);
  EXPECT_EQ(cfg.experiment.n_steps, 600u);
  EXPECT_NEAR(cfg.experiment.initial_rotation(2), std::numbers::pi, 1e-15);
  EXPECT_TRUE(cfg.initial_state().f == so3::RotationMatrix::identity());
}

TEST(RunConfig, ParsesEverySection) {
  const json doc = {
      {"physical", {{"inertia_kg_m2", {{2, 0, 0}, {0, 3, 0}, {0, 0, 4}}}, {"h_seconds", 0.05}}},
      {"weights", {{"Q_g", {1, 2, 3}}, {"Q_f", "inertia"}, {"R", {1, 1, 1}}, {"lambda", 0.2}}},
      {"mpc",
       {{"horizon_steps", 7},
        {"tau_max_newton_meters", nullptr},
        {"min_solvability_margin", 1e-5},
        {"solver", {{"max_iterations", 50}, {"grad_tol", 1e-7}}}}},
      {"design", {{"n_samples", 300}, {"shrink", 0.8}, {"seed", 9}}},
      {"experiment",
       {{"initial_rotation_axis_angle_rad", {0.1, 0.2, 0.3}},
        {"initial_omega_rad_per_s", {0.0, 0.0, 1.0}},
        {"n_steps", 42},
        {"seed", 5},
        {"convergence_tol_rad", 0.05},
        {"snapshot_interval_seconds", 1.0}}},
      {"output", {{"directory", "somewhere"}, {"csv_every_steps", 3}}}};
  const RunConfig cfg = gmpc::parse_run_config(doc);
  EXPECT_EQ(cfg.inertia, Matrix3(Vector3(2, 3, 4).asDiagonal()));
  EXPECT_EQ(cfg.h, 0.05);
  EXPECT_EQ(cfg.weights.q_g, Matrix3(Vector3(1, 2, 3).asDiagonal()));
  EXPECT_EQ(cfg.weights.q_f, cfg.inertia);
  EXPECT_EQ(cfg.weights.lambda, 0.2);
  EXPECT_EQ(cfg.horizon, 7);
  EXPECT_TRUE(std::isinf(cfg.tau_max));
  EXPECT_EQ(cfg.min_solvability_margin, 1e-5);
  EXPECT_EQ(cfg.solver.max_iterations, 50);
  EXPECT_EQ(cfg.solver.grad_tol, 1e-7);
  EXPECT_EQ(cfg.calibration.n_samples, 300u);
  EXPECT_EQ(cfg.calibration.shrink, 0.8);
  EXPECT_EQ(cfg.calibration.seed, 9u);
  EXPECT_EQ(cfg.experiment.n_steps, 42u);
  EXPECT_EQ(cfg.experiment.seed, 5u);
  EXPECT_EQ(cfg.output.directory, "somewhere");
  EXPECT_EQ(cfg.output.csv_every_steps, 3u);
  const auto x0 = cfg.initial_state();
  EXPECT_LE((x0.g.matrix() - so3::exp(Vector3(0.1, 0.2, 0.3)).matrix()).norm(), 1e-15);
  EXPECT_LE((x0.f.matrix() - so3::rot_z(0.05).matrix()).norm(), 1e-15);
}

TEST(RunConfig, RejectionsNameTheKey) {
  EXPECT_EQ(error_key({{"weights", {{"lambda", 1.5}}}}), "weights.lambda");
  EXPECT_EQ(error_key({{"weights", {{"lambda", 0.0}}}}), "weights.lambda");
  EXPECT_EQ(error_key({{"weights", {{"Q_g", {1, -1, 1}}}}}), "weights.Q_g");
  EXPECT_EQ(error_key({{"weights", {{"Q_f", "mass"}}}}), "weights.Q_f");
  EXPECT_EQ(error_key({{"physical", {{"h_seconds", -0.1}}}}), "physical.h_seconds");
  EXPECT_EQ(error_key({{"physical", {{"inertia_kg_m2", {1, 2}}}}}), "physical.inertia_kg_m2");
  EXPECT_EQ(error_key({{"physical", {{"inertia_kg_m2", {1, 0, -2}}}}}), "physical.inertia_kg_m2");
  EXPECT_EQ(error_key({{"mpc", {{"horizon_steps", 0}}}}), "mpc.horizon_steps");
  EXPECT_EQ(error_key({{"mpc", {{"horizon", 10}}}}), "mpc.horizon");
  EXPECT_EQ(error_key({{"experimnet", json::object()}}), "experimnet");
  EXPECT_EQ(error_key({{"output", {{"csv_every_steps", 0}}}}), "output.csv_every_steps");
}

TEST(RunConfig, ErrorMessageMentionsKey) {
  try {
    gmpc::parse_run_config({{"weights", {{"lambda", 1.5}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("weights.lambda"), std::string::npos);
  }
}

TEST(RunConfig, SnapshotRoundTrips) {
  RunConfig cfg;
  cfg.horizon = 4;
  cfg.tau_max = std::numeric_limits<double>::infinity();
  cfg.experiment.initial_omega = {0.1, -0.2, 0.3};
  const RunConfig back = gmpc::parse_run_config(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.horizon, 4);
  EXPECT_TRUE(std::isinf(back.tau_max));
}

TEST(RunConfig, MissingFileIsAConfigError) {
  EXPECT_THROW(gmpc::load_run_config("/nonexistent/gmpc.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// Design documents

TEST(DesignJson, RoundTripPreservesEverything) {
  const terminal::TerminalDesign& d = default_design();
  const json doc = io::design_to_json(d, RunConfig{}.to_json());
  const terminal::TerminalDesign back = io::design_from_json(json::parse(doc.dump()));
  EXPECT_EQ(back.h, d.h);
  EXPECT_EQ(back.j.matrix(), d.j.matrix());
  EXPECT_EQ(back.p, d.p);
  EXPECT_EQ(back.k, d.k);
  EXPECT_EQ(back.c, d.c);
  EXPECT_EQ(back.weights.r, d.weights.r);
  EXPECT_EQ(back.constraints.tau_max, d.constraints.tau_max);
  EXPECT_EQ(io::design_to_json(back, RunConfig{}.to_json()), doc);
}

TEST(DesignJson, DesignIsDeterministic) {
  const RunConfig cfg;
  const auto again = terminal::design_terminal(cfg.h, cfg.inertia_matrix(), cfg.weights,
                                               cfg.constraints(), cfg.calibration);
  EXPECT_EQ(io::design_to_json(again, cfg.to_json()).dump(),
            io::design_to_json(default_design(), cfg.to_json()).dump());
}

TEST(DesignJson, MalformedDocumentsAreRejected) {
  json doc = io::design_to_json(default_design(), json::object());
  json missing = doc;
  missing.erase("P");
  EXPECT_THROW(io::design_from_json(missing), io::FormatError);
  json short_k = doc;
  short_k["K"] = {1, 2, 3};
  EXPECT_THROW(io::design_from_json(short_k), io::FormatError);
  json bad_lambda = doc;
  bad_lambda["lambda"] = 2.0;
  EXPECT_THROW(io::design_from_json(bad_lambda), io::FormatError);
  EXPECT_THROW(io::design_from_json(json::array()), io::FormatError);
}

TEST(DesignJson, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "gmpc_test_io" / "nested" / "design.json";
  std::filesystem::remove_all(path.parent_path().parent_path());
  const json doc = io::design_to_json(default_design(), json::object());
  io::write_json(path, doc);
  EXPECT_EQ(io::read_json(path), doc);
  EXPECT_THROW(io::read_json(path.parent_path() / "absent.json"), io::FormatError);
}

// ---------------------------------------------------------------------------
// CSV layouts

TEST(Csv, HeadersAndRowCounts) {
  const gmpc::AttitudeSystem sys(default_design());
  const gmpc::lgvi::SpacecraftState x0{so3::rot_z(0.3), so3::RotationMatrix::identity()};
  const auto run = gmpc::mpc::closed_loop(sys, x0, gmpc::mpc::MpcConfig{}, {25, 1e-3, false});

  std::ostringstream traj;
  io::write_trajectory_csv(traj, run, 0.1);
  std::istringstream traj_in(traj.str());
  std::string line;
  std::getline(traj_in, line);
  EXPECT_EQ(line,
            "k,t,g11,g12,g13,g21,g22,g23,g31,g32,g33,f11,f12,f13,f21,f22,f23,f31,f32,f33,"
            "omega_x,omega_y,omega_z,tau_x,tau_y,tau_z");
  int rows = 0;
  std::string last;
  while (std::getline(traj_in, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 26);  // 25 steps plus the final state
  EXPECT_EQ(last.substr(last.size() - 3), ",,,");

  std::ostringstream diag;
  io::write_diagnostics_csv(diag, run, 0.1, 5);
  std::istringstream diag_in(diag.str());
  std::getline(diag_in, line);
  EXPECT_EQ(line, "k,t,V_star,V_candidate,L,F_terminal,feasible,penalty_violation,solver_iters");
  rows = 0;
  while (std::getline(diag_in, line)) ++rows;
  EXPECT_EQ(rows, 5);  // k = 0, 5, 10, 15, 20

  std::ostringstream snaps;
  io::write_snapshots_csv(snaps, run, 0.1, 1.0);
  std::istringstream snap_in(snaps.str());
  std::getline(snap_in, line);
  EXPECT_EQ(line, "t,g11,g12,g13,g21,g22,g23,g31,g32,g33");
  rows = 0;
  while (std::getline(snap_in, line)) ++rows;
  EXPECT_EQ(rows, 3);  // t = 0, 1, 2
}

}  // namespace
