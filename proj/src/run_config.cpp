#include "gmpc/run_config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>

namespace gmpc {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& section, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  if (!section.is_object()) {
    throw ConfigError(prefix, "expected an object");
  }
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& item : section.items()) {
    if (!known.count(item.key())) {
      throw ConfigError(join(prefix, item.key()), "unknown key");
    }
  }
}

double number(const json& value, const std::string& key) {
  if (!value.is_number()) {
    throw ConfigError(key, "expected a number");
  }
  const double v = value.get<double>();
  if (!std::isfinite(v)) {
    throw ConfigError(key, "must be finite");
  }
  return v;
}

double positive(const json& value, const std::string& key) {
  const double v = number(value, key);
  if (!(v > 0.0)) {
    throw ConfigError(key, "must be positive");
  }
  return v;
}

long long integer(const json& value, const std::string& key, long long min_value) {
  if (!value.is_number_integer()) {
    throw ConfigError(key, "expected an integer");
  }
  const long long v = value.get<long long>();
  if (v < min_value) {
    throw ConfigError(key, "must be at least " + std::to_string(min_value));
  }
  return v;
}

so3::Vector3 vector3(const json& value, const std::string& key) {
  if (!value.is_array() || value.size() != 3) {
    throw ConfigError(key, "expected an array of 3 numbers");
  }
  so3::Vector3 v;
  for (int i = 0; i < 3; ++i) {
    v(i) = number(value[static_cast<std::size_t>(i)], key + "[" + std::to_string(i) + "]");
  }
  return v;
}

// 3x3 nested array, or a 3-vector read as a diagonal.
so3::Matrix3 matrix3(const json& value, const std::string& key) {
  if (value.is_array() && value.size() == 3 && value[0].is_number()) {
    return vector3(value, key).asDiagonal();
  }
  if (!value.is_array() || value.size() != 3) {
    throw ConfigError(key, "expected a 3x3 array or a 3-vector diagonal");
  }
  so3::Matrix3 m;
  for (int r = 0; r < 3; ++r) {
    m.row(r) = vector3(value[static_cast<std::size_t>(r)], key + "[" + std::to_string(r) + "]")
                   .transpose();
  }
  return m;
}

bool is_spd(const so3::Matrix3& m) {
  if ((m - m.transpose()).norm() > 1e-12) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<so3::Matrix3> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0) > 0.0;
}

so3::Matrix3 spd(const json& value, const std::string& key) {
  const so3::Matrix3 m = matrix3(value, key);
  if (!is_spd(m)) {
    throw ConfigError(key, "must be symmetric positive definite");
  }
  return m;
}

json matrix_json(const so3::Matrix3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  }
  return rows;
}

json vector_json(const so3::Vector3& v) { return {v(0), v(1), v(2)}; }

void parse_physical(const json& s, RunConfig& cfg) {
  reject_unknown(s, "physical", {"inertia_kg_m2", "h_seconds"});
  if (s.contains("inertia_kg_m2")) {
    cfg.inertia = spd(s["inertia_kg_m2"], "physical.inertia_kg_m2");
  }
  if (s.contains("h_seconds")) {
    cfg.h = positive(s["h_seconds"], "physical.h_seconds");
  }
}

void parse_weights(const json& s, RunConfig& cfg, bool& q_f_is_inertia) {
  reject_unknown(s, "weights", {"Q_g", "Q_f", "R", "lambda"});
  if (s.contains("Q_g")) {
    cfg.weights.q_g = spd(s["Q_g"], "weights.Q_g");
  }
  if (s.contains("Q_f")) {
    const json& v = s["Q_f"];
    if (v.is_string()) {
      if (v.get<std::string>() != "inertia") {
        throw ConfigError("weights.Q_f", "the only accepted string is \"inertia\"");
      }
      q_f_is_inertia = true;
    } else {
      cfg.weights.q_f = spd(v, "weights.Q_f");
      q_f_is_inertia = false;
    }
  }
  if (s.contains("R")) {
    cfg.weights.r = spd(s["R"], "weights.R");
  }
  if (s.contains("lambda")) {
    const double lambda = number(s["lambda"], "weights.lambda");
    if (!(lambda > 0.0 && lambda < 1.0)) {
      throw ConfigError("weights.lambda", "must satisfy 0 < lambda < 1");
    }
    cfg.weights.lambda = lambda;
  }
}

void parse_solver(const json& s, mpc::SolverOptions& opt) {
  const std::string p = "mpc.solver";
  reject_unknown(s, p,
                 {"max_iterations", "grad_tol", "fd_step", "penalty_weight", "penalty_growth",
                  "max_penalty_rounds", "violation_tol", "terminal_backoff", "armijo_c1",
                  "armijo_shrink", "max_backtracks"});
  if (s.contains("max_iterations")) opt.max_iterations = static_cast<int>(integer(s["max_iterations"], p + ".max_iterations", 0));
  if (s.contains("grad_tol")) opt.grad_tol = positive(s["grad_tol"], p + ".grad_tol");
  if (s.contains("fd_step")) opt.fd_step = positive(s["fd_step"], p + ".fd_step");
  if (s.contains("penalty_weight")) opt.penalty_weight = positive(s["penalty_weight"], p + ".penalty_weight");
  if (s.contains("penalty_growth")) {
    opt.penalty_growth = number(s["penalty_growth"], p + ".penalty_growth");
    if (opt.penalty_growth < 1.0) throw ConfigError(p + ".penalty_growth", "must be at least 1");
  }
  if (s.contains("max_penalty_rounds")) opt.max_penalty_rounds = static_cast<int>(integer(s["max_penalty_rounds"], p + ".max_penalty_rounds", 1));
  if (s.contains("violation_tol")) opt.violation_tol = positive(s["violation_tol"], p + ".violation_tol");
  if (s.contains("terminal_backoff")) {
    opt.terminal_backoff = number(s["terminal_backoff"], p + ".terminal_backoff");
    if (!(opt.terminal_backoff >= 0.0 && opt.terminal_backoff < 1.0)) {
      throw ConfigError(p + ".terminal_backoff", "must lie in [0, 1)");
    }
  }
  if (s.contains("armijo_c1")) {
    opt.armijo_c1 = number(s["armijo_c1"], p + ".armijo_c1");
    if (!(opt.armijo_c1 > 0.0 && opt.armijo_c1 < 1.0)) throw ConfigError(p + ".armijo_c1", "must lie in (0, 1)");
  }
  if (s.contains("armijo_shrink")) {
    opt.armijo_shrink = number(s["armijo_shrink"], p + ".armijo_shrink");
    if (!(opt.armijo_shrink > 0.0 && opt.armijo_shrink < 1.0)) throw ConfigError(p + ".armijo_shrink", "must lie in (0, 1)");
  }
  if (s.contains("max_backtracks")) opt.max_backtracks = static_cast<int>(integer(s["max_backtracks"], p + ".max_backtracks", 1));
}

void parse_mpc(const json& s, RunConfig& cfg) {
  reject_unknown(s, "mpc", {"horizon_steps", "tau_max_newton_meters", "min_solvability_margin", "solver"});
  if (s.contains("horizon_steps")) {
    cfg.horizon = static_cast<int>(integer(s["horizon_steps"], "mpc.horizon_steps", 1));
  }
  if (s.contains("tau_max_newton_meters")) {
    const json& v = s["tau_max_newton_meters"];
    cfg.tau_max = v.is_null() ? std::numeric_limits<double>::infinity()
                              : positive(v, "mpc.tau_max_newton_meters");
  }
  if (s.contains("min_solvability_margin")) {
    cfg.min_solvability_margin = number(s["min_solvability_margin"], "mpc.min_solvability_margin");
    if (cfg.min_solvability_margin < 0.0) {
      throw ConfigError("mpc.min_solvability_margin", "must be nonnegative");
    }
  }
  if (s.contains("solver")) {
    parse_solver(s["solver"], cfg.solver);
  }
}

void parse_design(const json& s, RunConfig& cfg) {
  reject_unknown(s, "design", {"n_samples", "shrink", "seed"});
  if (s.contains("n_samples")) cfg.calibration.n_samples = static_cast<std::size_t>(integer(s["n_samples"], "design.n_samples", 1));
  if (s.contains("shrink")) {
    cfg.calibration.shrink = number(s["shrink"], "design.shrink");
    if (!(cfg.calibration.shrink > 0.0 && cfg.calibration.shrink <= 1.0)) {
      throw ConfigError("design.shrink", "must lie in (0, 1]");
    }
  }
  if (s.contains("seed")) cfg.calibration.seed = static_cast<std::uint64_t>(integer(s["seed"], "design.seed", 0));
}

void parse_experiment(const json& s, RunConfig& cfg) {
  const std::string p = "experiment";
  reject_unknown(s, p,
                 {"initial_rotation_axis_angle_rad", "initial_omega_rad_per_s", "n_steps", "seed",
                  "convergence_tol_rad", "snapshot_interval_seconds"});
  ExperimentSettings& e = cfg.experiment;
  if (s.contains("initial_rotation_axis_angle_rad")) {
    e.initial_rotation = vector3(s["initial_rotation_axis_angle_rad"], p + ".initial_rotation_axis_angle_rad");
  }
  if (s.contains("initial_omega_rad_per_s")) {
    e.initial_omega = vector3(s["initial_omega_rad_per_s"], p + ".initial_omega_rad_per_s");
  }
  if (s.contains("n_steps")) e.n_steps = static_cast<std::size_t>(integer(s["n_steps"], p + ".n_steps", 1));
  if (s.contains("seed")) e.seed = static_cast<std::uint64_t>(integer(s["seed"], p + ".seed", 0));
  if (s.contains("convergence_tol_rad")) e.convergence_tol = positive(s["convergence_tol_rad"], p + ".convergence_tol_rad");
  if (s.contains("snapshot_interval_seconds")) e.snapshot_interval = positive(s["snapshot_interval_seconds"], p + ".snapshot_interval_seconds");
}

void parse_output(const json& s, RunConfig& cfg) {
  reject_unknown(s, "output", {"directory", "csv_every_steps"});
  if (s.contains("directory")) {
    if (!s["directory"].is_string()) throw ConfigError("output.directory", "expected a string");
    cfg.output.directory = s["directory"].get<std::string>();
  }
  if (s.contains("csv_every_steps")) {
    cfg.output.csv_every_steps = static_cast<std::size_t>(integer(s["csv_every_steps"], "output.csv_every_steps", 1));
  }
}

}  // namespace

terminal::StageWeights RunConfig::default_weights() {
  terminal::StageWeights w;
  w.q_g = so3::Matrix3::Identity();
  w.q_f = so3::Vector3{1.0, 1.2, 1.5}.asDiagonal();
  w.r = 2.0 * so3::Matrix3::Identity();
  w.lambda = 0.1;
  return w;
}

lgvi::SpacecraftState RunConfig::initial_state() const {
  return {so3::exp(experiment.initial_rotation), so3::exp(h * experiment.initial_omega)};
}

json RunConfig::to_json() const {
  json tau = std::isfinite(tau_max) ? json(tau_max) : json(nullptr);
  return {
      {"physical", {{"inertia_kg_m2", matrix_json(inertia)}, {"h_seconds", h}}},
      {"weights",
       {{"Q_g", matrix_json(weights.q_g)},
        {"Q_f", matrix_json(weights.q_f)},
        {"R", matrix_json(weights.r)},
        {"lambda", weights.lambda}}},
      {"mpc",
       {{"horizon_steps", horizon},
        {"tau_max_newton_meters", tau},
        {"min_solvability_margin", min_solvability_margin},
        {"solver",
         {{"max_iterations", solver.max_iterations},
          {"grad_tol", solver.grad_tol},
          {"fd_step", solver.fd_step},
          {"penalty_weight", solver.penalty_weight},
          {"penalty_growth", solver.penalty_growth},
          {"max_penalty_rounds", solver.max_penalty_rounds},
          {"violation_tol", solver.violation_tol},
          {"terminal_backoff", solver.terminal_backoff},
          {"armijo_c1", solver.armijo_c1},
          {"armijo_shrink", solver.armijo_shrink},
          {"max_backtracks", solver.max_backtracks}}}}},
      {"design",
       {{"n_samples", calibration.n_samples},
        {"shrink", calibration.shrink},
        {"seed", calibration.seed}}},
      {"experiment",
       {{"initial_rotation_axis_angle_rad", vector_json(experiment.initial_rotation)},
        {"initial_omega_rad_per_s", vector_json(experiment.initial_omega)},
        {"n_steps", experiment.n_steps},
        {"seed", experiment.seed},
        {"convergence_tol_rad", experiment.convergence_tol},
        {"snapshot_interval_seconds", experiment.snapshot_interval}}},
      {"output",
       {{"directory", output.directory}, {"csv_every_steps", output.csv_every_steps}}},
  };
}

RunConfig parse_run_config(const json& doc) {
  reject_unknown(doc, "", {"physical", "weights", "mpc", "design", "experiment", "output"});
  RunConfig cfg;
  bool q_f_is_inertia = true;
  if (doc.contains("physical")) parse_physical(doc["physical"], cfg);
  if (doc.contains("weights")) parse_weights(doc["weights"], cfg, q_f_is_inertia);
  if (q_f_is_inertia) {
    cfg.weights.q_f = cfg.inertia;
  }
  if (doc.contains("mpc")) parse_mpc(doc["mpc"], cfg);
  if (doc.contains("design")) parse_design(doc["design"], cfg);
  if (doc.contains("experiment")) parse_experiment(doc["experiment"], cfg);
  if (doc.contains("output")) parse_output(doc["output"], cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path.string(), "cannot open file");
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(doc);
}

}  // namespace gmpc
