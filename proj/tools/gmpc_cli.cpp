// gmpc: terminal design, closed-loop simulation, and verification suites for
// geometric attitude MPC.
//
// Exit codes: 0 ok, 1 verification failure, 2 usage or configuration error,
// 3 closed loop infeasible.

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gmpc/attitude_system.hpp"
#include "gmpc/closed_loop.hpp"
#include "gmpc/experiments.hpp"
#include "gmpc/run_config.hpp"
#include "gmpc/serialization.hpp"
#include "gmpc/terminal_design.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;
constexpr int kInfeasible = 3;

// Keeps certification samples independent of the calibration samples.
constexpr std::uint64_t kCertificationSeedOffset = 0x9E3779B97F4A7C15ULL;

struct CommonOptions {
  std::string config;
  std::string design;
  std::string out;
  std::optional<std::uint64_t> seed;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Run configuration (JSON)");
  cmd->add_option("--design", opts.design, "Terminal design file (JSON)");
  cmd->add_option("--out", opts.out, "Output directory");
  cmd->add_option("--seed", opts.seed, "Seed for sampled quantities");
}

gmpc::RunConfig load_config(const CommonOptions& opts) {
  gmpc::RunConfig cfg = opts.config.empty() ? gmpc::RunConfig{} : gmpc::load_run_config(opts.config);
  if (opts.seed) {
    cfg.experiment.seed = *opts.seed;
    cfg.calibration.seed = *opts.seed;
  }
  return cfg;
}

fs::path out_dir(const CommonOptions& opts, const gmpc::RunConfig& cfg) {
  return opts.out.empty() ? fs::path(cfg.output.directory) : fs::path(opts.out);
}

gmpc::terminal::TerminalDesign read_design(const std::string& path) {
  if (!fs::exists(path)) {
    throw UsageError("design file not found: " + path);
  }
  try {
    return gmpc::io::design_from_json(gmpc::io::read_json(path));
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot read design: ") + e.what());
  }
}

gmpc::terminal::TerminalDesign make_design(const gmpc::RunConfig& cfg) {
  return gmpc::terminal::design_terminal(cfg.h, cfg.inertia_matrix(), cfg.weights,
                                         cfg.constraints(), cfg.calibration);
}

int cmd_design(const CommonOptions& opts) {
  const gmpc::RunConfig cfg = load_config(opts);
  const gmpc::terminal::TerminalDesign design = make_design(cfg);
  const fs::path path = opts.design.empty() ? out_dir(opts, cfg) / "design.json" : fs::path(opts.design);
  gmpc::io::write_json(path, gmpc::io::design_to_json(design, cfg.to_json()));

  const auto& cert = design.certification;
  std::cout << "DARE residual:        " << design.dare_residual << "\n"
            << "rho(A - BK):          " << design.closed_loop_radius << "\n"
            << "terminal level c:     " << design.c << "\n"
            << "certified samples:    " << cert.n_samples << "\n"
            << "control margin:       " << cert.control_margin << "\n"
            << "invariance margin:    " << cert.invariance_margin << "\n"
            << "decrease margin:      " << cert.decrease_margin << "\n"
            << "min solvability:      " << cert.min_solvability << "\n"
            << "wrote " << path.string() << "\n";
  return kOk;
}

int cmd_simulate(const CommonOptions& opts) {
  if (opts.design.empty()) {
    throw UsageError("simulate requires --design PATH");
  }
  const gmpc::RunConfig cfg = load_config(opts);
  const gmpc::terminal::TerminalDesign design = read_design(opts.design);
  const gmpc::AttitudeSystem system(design);
  const gmpc::mpc::ClosedLoopOptions loop{cfg.experiment.n_steps, cfg.experiment.convergence_tol,
                                          false};
  const auto run = gmpc::mpc::closed_loop(system, cfg.initial_state(), cfg.mpc_config(), loop);

  const fs::path dir = out_dir(opts, cfg);
  std::ostringstream traj;
  gmpc::io::write_trajectory_csv(traj, run, design.h, cfg.output.csv_every_steps);
  gmpc::io::write_file(dir / "trajectory.csv", traj.str());
  std::ostringstream diag;
  gmpc::io::write_diagnostics_csv(diag, run, design.h, cfg.output.csv_every_steps);
  gmpc::io::write_file(dir / "diagnostics.csv", diag.str());
  std::ostringstream snaps;
  gmpc::io::write_snapshots_csv(snaps, run, design.h, cfg.experiment.snapshot_interval);
  gmpc::io::write_file(dir / "snapshots.csv", snaps.str());

  double total_stage = 0.0;
  for (const auto& s : run.steps) {
    total_stage += s.stage_cost;
  }
  const double final_distance = system.distance(run.final_state, system.equilibrium_state());
  gmpc::io::write_json(dir / "summary.json",
                       {{"steps", run.steps.size()},
                        {"converged", run.converged},
                        {"converged_at", run.converged_at ? json(*run.converged_at) : json(nullptr)},
                        {"final_distance", final_distance},
                        {"total_stage_cost", total_stage},
                        {"design_c", design.c},
                        {"config", cfg.to_json()}});

  std::cout << "steps=" << run.steps.size() << " converged="
            << (run.converged ? "yes (k=" + std::to_string(*run.converged_at) + ")" : std::string("no"))
            << " final_distance=" << final_distance << " total_stage_cost=" << total_stage << "\n";
  return kOk;
}

gmpc::experiments::ExperimentReport run_suite(const std::string& suite, const gmpc::RunConfig& cfg,
                                              const gmpc::terminal::TerminalDesign& design,
                                              const fs::path& dir) {
  namespace ex = gmpc::experiments;
  if (suite == "conservation") {
    ex::ConservationOptions opt;
    opt.seed = cfg.experiment.seed;
    opt.out_dir = dir;
    return ex::verify_conservation(design.h, design.j, opt);
  }
  if (suite == "local-law") {
    ex::CertificationOptions opt;
    opt.n_samples = cfg.calibration.n_samples;
    opt.seed = cfg.experiment.seed + kCertificationSeedOffset;
    return ex::certify_local_law(design, opt);
  }
  if (suite == "lyapunov") {
    ex::LyapunovSuiteOptions opt;
    opt.n_steps = cfg.experiment.n_steps;
    return ex::lyapunov_suite(design, cfg.mpc_config(), cfg.initial_state(), opt);
  }
  ex::DiscontinuityOptions opt;
  opt.n_steps = cfg.experiment.n_steps;
  opt.convergence_tol = cfg.experiment.convergence_tol;
  opt.snapshot_interval = cfg.experiment.snapshot_interval;
  opt.out_dir = dir;
  return ex::probe_discontinuity(design, cfg.mpc_config(), opt).report;
}

int cmd_verify(const std::string& suite, const CommonOptions& opts) {
  const gmpc::RunConfig cfg = load_config(opts);
  const gmpc::terminal::TerminalDesign design =
      opts.design.empty() ? make_design(cfg) : read_design(opts.design);
  const fs::path dir = out_dir(opts, cfg);

  json reports = json::array();
  bool all_passed = true;
  for (const std::string name : {"conservation", "local-law", "lyapunov", "discontinuity"}) {
    if (suite != "all" && suite != name) {
      continue;
    }
    const auto report = run_suite(name, cfg, design, dir);
    for (const auto& v : report.verdicts) {
      std::cerr << (v.passed ? "PASS " : (v.required ? "FAIL " : "INFO ")) << name << ": "
                << v.invariant << " (measured " << v.margin << ", threshold " << v.threshold
                << ")\n";
    }
    all_passed = all_passed && report.passed();
    reports.push_back(report.to_json());
  }
  const json verdict = {{"suite", suite}, {"passed", all_passed}, {"reports", reports}};
  gmpc::io::write_json(dir / ("verify_" + suite + ".json"), verdict);
  std::cout << verdict.dump(2) << "\n";
  return all_passed ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric MPC for rigid-body attitude control"};
  app.require_subcommand(1);

  CommonOptions design_opts;
  CLI::App* design = app.add_subcommand("design", "Compute P, K and the terminal level c");
  add_common(design, design_opts);

  CommonOptions sim_opts;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the closed loop from the configured state");
  add_common(simulate, sim_opts);

  CommonOptions verify_opts;
  std::string suite;
  CLI::App* verify = app.add_subcommand("verify", "Run invariant suites");
  verify->add_option("suite", suite, "conservation | local-law | lyapunov | discontinuity | all")
      ->required()
      ->check(CLI::IsMember({"conservation", "local-law", "lyapunov", "discontinuity", "all"}));
  add_common(verify, verify_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*design) return cmd_design(design_opts);
    if (*simulate) return cmd_simulate(sim_opts);
    return cmd_verify(suite, verify_opts);
  } catch (const gmpc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const gmpc::terminal::TerminalError& e) {
    std::cerr << "design failed: " << e.what() << "\n";
    return kUsage;
  } catch (const gmpc::lgvi::InvalidInertia& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const gmpc::mpc::InfeasibleAt& e) {
    std::cerr << "infeasible at step " << e.step() << ": " << e.what() << "\n";
    return kInfeasible;
  } catch (const gmpc::mpc::RolloutFailure& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
