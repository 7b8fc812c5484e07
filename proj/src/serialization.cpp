#include "gmpc/serialization.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gmpc::io {

namespace {

using nlohmann::json;

template <class Derived>
json row_major(const Eigen::MatrixBase<Derived>& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out.push_back(m(r, c));
    }
  }
  return out;
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> read_matrix(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array() || doc[key].size() != Rows * Cols) {
    throw FormatError(std::string("design field '") + key + "' must hold " +
                      std::to_string(Rows * Cols) + " numbers");
  }
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r) {
    for (int c = 0; c < Cols; ++c) {
      const json& v = doc[key][static_cast<std::size_t>(r * Cols + c)];
      if (!v.is_number()) {
        throw FormatError(std::string("design field '") + key + "' must hold numbers");
      }
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

double read_number(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number()) {
    throw FormatError(std::string("design field '") + key + "' must be a number");
  }
  return doc[key].get<double>();
}

// Infinite margins (no samples) do not fit in JSON.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or(const json& doc, const char* key, double fallback) {
  return doc.contains(key) && doc[key].is_number() ? doc[key].get<double>() : fallback;
}

void put(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
  } else {
    out << v;
  }
}

void put_rotation(std::ostream& out, const so3::RotationMatrix& r) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out << ',';
      put(out, r(i, j));
    }
  }
}

}  // namespace

json rotation_json(const so3::RotationMatrix& r) { return row_major(r.matrix()); }

json design_to_json(const terminal::TerminalDesign& design, const json& config) {
  const terminal::Certification& cert = design.certification;
  return {
      {"h", design.h},
      {"J", row_major(design.j.matrix())},
      {"Q_g", row_major(design.weights.q_g)},
      {"Q_f", row_major(design.weights.q_f)},
      {"R", row_major(design.weights.r)},
      {"lambda", design.weights.lambda},
      {"tau_max", finite_or_null(design.constraints.tau_max)},
      {"min_solvability_margin", design.constraints.min_solvability_margin},
      {"P", row_major(design.p)},
      {"K", row_major(design.k)},
      {"c", design.c},
      {"dare_residual", design.dare_residual},
      {"closed_loop_radius", design.closed_loop_radius},
      {"certification",
       {{"n_samples", cert.n_samples},
        {"max_violation", finite_or_null(cert.max_violation())},
        {"control_margin", finite_or_null(cert.control_margin)},
        {"invariance_margin", finite_or_null(cert.invariance_margin)},
        {"decrease_margin", finite_or_null(cert.decrease_margin)},
        {"min_solvability", finite_or_null(cert.min_solvability)},
        {"failed_steps", cert.failed_steps},
        {"passed", cert.passed()}}},
      {"config", config},
  };
}

terminal::TerminalDesign design_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw FormatError("design document must be a JSON object");
  }
  terminal::TerminalDesign design{read_number(doc, "h"),
                                  lgvi::InertiaMatrix(read_matrix<3, 3>(doc, "J"))};
  design.weights.q_g = read_matrix<3, 3>(doc, "Q_g");
  design.weights.q_f = read_matrix<3, 3>(doc, "Q_f");
  design.weights.r = read_matrix<3, 3>(doc, "R");
  design.weights.lambda = read_number(doc, "lambda");
  try {
    design.weights.validate();
  } catch (const terminal::InvalidWeights& e) {
    throw FormatError(std::string("design weights: ") + e.what());
  }
  design.constraints.tau_max = doc.contains("tau_max") && doc["tau_max"].is_number()
                                   ? doc["tau_max"].get<double>()
                                   : std::numeric_limits<double>::infinity();
  design.constraints.min_solvability_margin =
      number_or(doc, "min_solvability_margin", design.constraints.min_solvability_margin);
  design.p = read_matrix<6, 6>(doc, "P");
  design.k = read_matrix<3, 6>(doc, "K");
  design.c = read_number(doc, "c");
  if (!(design.h > 0.0) || !(design.c > 0.0)) {
    throw FormatError("design requires h > 0 and c > 0");
  }
  design.dare_residual = number_or(doc, "dare_residual", 0.0);
  design.closed_loop_radius = number_or(doc, "closed_loop_radius", 0.0);
  if (doc.contains("certification") && doc["certification"].is_object()) {
    const json& c = doc["certification"];
    terminal::Certification& cert = design.certification;
    cert.n_samples = c.value("n_samples", std::size_t{0});
    cert.control_margin = number_or(c, "control_margin", cert.control_margin);
    cert.invariance_margin = number_or(c, "invariance_margin", cert.invariance_margin);
    cert.decrease_margin = number_or(c, "decrease_margin", cert.decrease_margin);
    cert.min_solvability = number_or(c, "min_solvability", cert.min_solvability);
    cert.failed_steps = c.value("failed_steps", std::size_t{0});
  }
  return design;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << content;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_trajectory_csv(std::ostream& out, const AttitudeRun& run, double h, std::size_t every) {
  out << std::setprecision(17);
  out << "k,t";
  for (const char* name : {"g", "f"}) {
    for (int i = 1; i <= 3; ++i) {
      for (int j = 1; j <= 3; ++j) {
        out << ',' << name << i << j;
      }
    }
  }
  out << ",omega_x,omega_y,omega_z,tau_x,tau_y,tau_z\n";
  const auto row = [&](std::size_t k, const lgvi::SpacecraftState& x, const so3::Vector3* tau) {
    out << k << ',' << static_cast<double>(k) * h;
    put_rotation(out, x.g);
    put_rotation(out, x.f);
    const so3::Vector3 omega = lgvi::body_rate(x.f, h);
    out << ',' << omega(0) << ',' << omega(1) << ',' << omega(2);
    if (tau) {
      out << ',' << (*tau)(0) << ',' << (*tau)(1) << ',' << (*tau)(2) << '\n';
    } else {
      out << ",,,\n";
    }
  };
  for (const auto& s : run.steps) {
    if (s.k % every == 0) {
      row(s.k, s.state, &s.control);
    }
  }
  row(run.steps.size(), run.final_state, nullptr);
}

void write_diagnostics_csv(std::ostream& out, const AttitudeRun& run, double h, std::size_t every) {
  out << std::setprecision(17);
  out << "k,t,V_star,V_candidate,L,F_terminal,feasible,penalty_violation,solver_iters\n";
  for (const auto& s : run.steps) {
    if (s.k % every != 0) {
      continue;
    }
    out << s.k << ',' << static_cast<double>(s.k) * h << ',';
    put(out, s.v_star);
    out << ',';
    put(out, s.v_candidate);
    out << ',';
    put(out, s.stage_cost);
    out << ',';
    put(out, s.terminal_value);
    out << ',' << (s.feasible ? 1 : 0) << ',';
    put(out, s.violation);
    out << ',' << s.iterations << '\n';
  }
}

void write_snapshots_csv(std::ostream& out, const AttitudeRun& run, double h, double interval) {
  out << std::setprecision(17);
  out << "t,g11,g12,g13,g21,g22,g23,g31,g32,g33\n";
  const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(interval / h)));
  for (const auto& s : run.steps) {
    if (s.k % stride == 0) {
      out << static_cast<double>(s.k) * h;
      put_rotation(out, s.state.g);
      out << '\n';
    }
  }
  if (run.steps.size() % stride == 0) {
    out << static_cast<double>(run.steps.size()) * h;
    put_rotation(out, run.final_state.g);
    out << '\n';
  }
}

}  // namespace gmpc::io
