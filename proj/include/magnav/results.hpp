#pragma once

// Result bundles: a directory holding the resolved scenario, the planned
// trajectory, the gain schedule and any statistics written by simulate/sweep.
//
//   manifest.json          tool version, master seed, file list
//   scenario.resolved.cfg  SI scenario with every default expanded
//   trajectory.csv         planned trajectory (schema below)
//   gains.bin, gains.json  flat float64 gains + layout index
//   report.json            solver report
//   stats_<mode>.csv       Table-style terminal statistics (cm, cm/s)
//   band_<mode>.csv        per-step mean/std of the IPM position
//   runs_<mode>/run_NNN.csv per-run logs

#include <bit>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "magnav/problem.hpp"
#include "magnav/scenario_io.hpp"
#include "magnav/simulation.hpp"

#ifndef MAGNAV_VERSION
#define MAGNAV_VERSION "0.0.0"
#endif

namespace magnav::io {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kGainsSchemaVersion = 1;

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form; identical input gives identical bytes.
inline std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw BundleError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

/// Writes via a sibling temp file and rename, so readers never see a
/// partially written file.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw BundleError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw BundleError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw BundleError("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- trajectory CSV -----------------------------------------------------------

inline std::vector<std::string> trajectory_columns() {
  std::vector<std::string> c{"t", "p_I_x", "p_I_y", "p_I_z",
                             "v_I_x", "v_I_y", "v_I_z"};
  for (int i = 1; i <= kNumJoints; ++i) c.push_back("q" + std::to_string(i));
  for (int i = 1; i <= kControlDim; ++i) c.push_back("u" + std::to_string(i));
  for (const char* s : {"p_E_x", "p_E_y", "p_E_z", "kappa"}) c.emplace_back(s);
  return c;
}

namespace detail {

inline std::string header_line(const std::vector<std::string>& cols) {
  std::string s;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) s += ',';
    s += cols[i];
  }
  return s + "\n";
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

}  // namespace detail

/// One row per state (N+1); u cells are empty on the last row. SI units.
inline std::string trajectory_csv(const ilqr::Trajectory& traj, const Scenario& sc) {
  std::string s = "# schema_version: " + std::to_string(kCsvSchemaVersion) +
                  ", table: trajectory, units: SI\n";
  s += detail::header_line(trajectory_columns());
  const int n = traj.horizon();
  for (int k = 0; k <= n; ++k) {
    const VecX& x = traj.states[k];
    const JointVec q = x.segment<kNumJoints>(plant::kJoints);
    s += fmt(k * traj.dt);
    for (int i = 0; i < plant::kJoints + kNumJoints; ++i) s += "," + fmt(x[i]);
    for (int i = 0; i < kControlDim; ++i) {
      s += ",";
      if (k < n) s += fmt(traj.inputs[k][i]);
    }
    const auto pose = kinematics::forward_kinematics(sc.model.dh, q);
    for (int i = 0; i < 3; ++i) s += "," + fmt(pose.position[i]);
    const double kappa = kinematics::condition_number(
        kinematics::geometric_jacobian(sc.model.dh, q), sc.kappa_sentinel);
    s += "," + fmt(kappa) + "\n";
  }
  return s;
}

inline ilqr::Trajectory parse_trajectory_csv(const std::string& text, double dt) {
  const auto ls = detail::lines(text);
  const auto cols = trajectory_columns();
  if (ls.size() < 3 || ls[0].rfind("# schema_version: 1", 0) != 0) {
    throw BundleError("trajectory.csv: missing or unsupported schema header");
  }
  if (ls[1] + "\n" != detail::header_line(cols)) {
    throw BundleError("trajectory.csv: unexpected column header");
  }
  ilqr::Trajectory traj;
  traj.dt = dt;
  const std::size_t rows = ls.size() - 2;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto cells = detail::split(ls[r + 2]);
    if (cells.size() != cols.size()) {
      throw BundleError("trajectory.csv: row " + std::to_string(r) + " has " +
                        std::to_string(cells.size()) + " cells");
    }
    VecX x(kStateDim);
    for (int i = 0; i < kStateDim; ++i) x[i] = parse_double(cells[1 + i]);
    traj.states.push_back(x);
    if (r + 1 < rows) {
      VecX u(kControlDim);
      for (int i = 0; i < kControlDim; ++i) {
        u[i] = parse_double(cells[1 + kStateDim + i]);
      }
      traj.inputs.push_back(u);
    }
  }
  return traj;
}

// --- gains --------------------------------------------------------------------

/// Per step k: K_k row-major (nu × nx) followed by d_k (nu), float64 LE.
inline std::string gains_binary(const ilqr::GainSchedule& g) {
  std::string out;
  auto put = [&](double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  };
  for (int k = 0; k < g.horizon(); ++k) {
    for (Eigen::Index r = 0; r < g.K[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.K[k].cols(); ++c) put(g.K[k](r, c));
    }
    for (Eigen::Index r = 0; r < g.d[k].size(); ++r) put(g.d[k][r]);
  }
  return out;
}

inline nlohmann::ordered_json gains_index(const ilqr::GainSchedule& g) {
  const Eigen::Index nu = g.horizon() ? g.K[0].rows() : kControlDim;
  const Eigen::Index nx = g.horizon() ? g.K[0].cols() : kStateDim;
  nlohmann::ordered_json j;
  j["schema_version"] = kGainsSchemaVersion;
  j["file"] = "gains.bin";
  j["dtype"] = "float64";
  j["byte_order"] = "little";
  j["horizon"] = g.horizon();
  j["control_dim"] = nu;
  j["state_dim"] = nx;
  j["layout"] = "for k in 0..horizon-1: K_k row-major [control_dim x state_dim], then d_k [control_dim]";
  j["values_per_step"] = nu * nx + nu;
  j["total_values"] = g.horizon() * (nu * nx + nu);
  return j;
}

inline ilqr::GainSchedule parse_gains(const std::string& bytes,
                                      const nlohmann::json& index) {
  if (index.value("schema_version", 0) != kGainsSchemaVersion ||
      index.value("dtype", "") != "float64" || index.value("byte_order", "") != "little") {
    throw BundleError("gains.json: unsupported layout");
  }
  const int n = index.at("horizon").get<int>();
  const int nu = index.at("control_dim").get<int>();
  const int nx = index.at("state_dim").get<int>();
  const std::size_t expect = static_cast<std::size_t>(n) * (nu * nx + nu) * 8;
  if (bytes.size() != expect) {
    throw BundleError("gains.bin: expected " + std::to_string(expect) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  std::size_t pos = 0;
  auto get = [&] {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
    }
    return std::bit_cast<double>(bits);
  };
  ilqr::GainSchedule g;
  for (int k = 0; k < n; ++k) {
    MatX K(nu, nx);
    for (int r = 0; r < nu; ++r) {
      for (int c = 0; c < nx; ++c) K(r, c) = get();
    }
    VecX d(nu);
    for (int r = 0; r < nu; ++r) d[r] = get();
    g.K.push_back(std::move(K));
    g.d.push_back(std::move(d));
  }
  return g;
}

// --- statistics ----------------------------------------------------------------

inline const std::vector<std::string>& stats_rows() {
  static const std::vector<std::string> rows{
      "Initial Position [cm]",          "Goal Position [cm]",
      "Mean Position at Final [cm]",    "Std. Dev. Position at Final [cm]",
      "Mean Velocity at Final [cm/s]",  "Std. Dev. Velocity at Final [cm/s]"};
  return rows;
}

/// Terminal statistics in the row layout of the experimental table.
inline std::string stats_csv(const sim::StudySummary& s, const Scenario& sc) {
  std::string out = "# schema_version: " + std::to_string(kCsvSchemaVersion) +
                    ", table: ipm_statistics, mode: " + sim::to_string(s.mode) +
                    ", runs: " + std::to_string(s.runs) +
                    ", failed_runs: " + std::to_string(s.failed_runs.size()) +
                    ", position_variance: " + fmt(s.position_variance) + " " +
                    sc.noise.variance_unit + "\n";
  out += "Parameter,X,Y,Z\n";
  const Vec3 vals[] = {sc.initial_position,       sc.goal_position,
                       s.terminal_position.mean,  s.terminal_position.std,
                       s.terminal_velocity.mean,  s.terminal_velocity.std};
  for (std::size_t r = 0; r < stats_rows().size(); ++r) {
    out += stats_rows()[r];
    for (int i = 0; i < 3; ++i) out += "," + fmt(vals[r][i] * 100.0);
    out += "\n";
  }
  return out;
}

inline std::string band_csv(const sim::StudySummary& s, double dt) {
  std::string out = "# schema_version: " + std::to_string(kCsvSchemaVersion) +
                    ", table: position_band, mode: " + sim::to_string(s.mode) +
                    ", units: SI\n";
  out += "t,mean_x,mean_y,mean_z,std_x,std_y,std_z\n";
  for (std::size_t k = 0; k < s.band_mean.size(); ++k) {
    out += fmt(static_cast<double>(k) * dt);
    for (int i = 0; i < 3; ++i) out += "," + fmt(s.band_mean[k][i]);
    for (int i = 0; i < 3; ++i) out += "," + fmt(s.band_std[k][i]);
    out += "\n";
  }
  return out;
}

/// Per-run log: true state, estimate and measurement per step (SI).
inline std::string runlog_csv(const sim::RunLog& log) {
  std::string out = "# schema_version: " + std::to_string(kCsvSchemaVersion) +
                    ", table: run_log, mode: " + sim::to_string(log.mode) +
                    ", seed: " + std::to_string(log.seed) + ", units: SI";
  if (!log.ok()) out += ", failure_step: " + std::to_string(*log.failure_step);
  out += "\n";
  std::vector<std::string> cols{"t", "p_x", "p_y", "p_z", "v_x", "v_y", "v_z"};
  for (int i = 1; i <= kNumJoints; ++i) cols.push_back("q" + std::to_string(i));
  for (const char* c : {"est_p_x", "est_p_y", "est_p_z", "est_v_x", "est_v_y",
                        "est_v_z", "z_x", "z_y", "z_z"}) {
    cols.emplace_back(c);
  }
  for (int i = 1; i <= kControlDim; ++i) cols.push_back("u" + std::to_string(i));
  out += detail::header_line(cols);
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
  for (std::size_t k = 0; k < log.true_states.size(); ++k) {
    out += fmt(static_cast<double>(k) * log.dt);
    for (int i = 0; i < kStateDim; ++i) out += "," + fmt(log.true_states[k][i]);
    const bool has = k < log.estimates.size();
    for (int i = 0; i < 6; ++i) out += "," + (has ? fmt(log.estimates[k][i]) : "");
    for (int i = 0; i < 3; ++i) out += "," + (has ? cell(log.measurements[k][i]) : "");
    const bool hu = k < log.applied_inputs.size();
    for (int i = 0; i < kControlDim; ++i) {
      out += "," + (hu ? fmt(log.applied_inputs[k][i]) : "");
    }
    out += "\n";
  }
  return out;
}

// --- bundle -----------------------------------------------------------------------

inline nlohmann::ordered_json report_json(const ilqr::SolverReport& r) {
  nlohmann::ordered_json j;
  j["status"] = ilqr::to_string(r.status);
  j["message"] = r.message;
  j["total_inner_iterations"] = r.total_inner_iterations;
  j["solve_seconds"] = r.solve_seconds;
  auto& outer = j["outer"];
  outer = nlohmann::ordered_json::array();
  for (const auto& o : r.outer) {
    outer.push_back({{"cost", o.cost},
                     {"max_violation", o.max_violation},
                     {"mu", o.mu},
                     {"inner_iterations", o.inner_iterations},
                     {"regularization", o.regularization}});
  }
  return j;
}

struct Bundle {
  Scenario scenario;
  PlanResult plan;
  std::uint64_t master_seed = 1;
};

inline void write_bundle(const std::filesystem::path& dir, const Bundle& b) {
  std::filesystem::create_directories(dir);
  write_atomic(dir / "scenario.resolved.cfg", emit_scenario(b.scenario));
  write_atomic(dir / "trajectory.csv", trajectory_csv(b.plan.trajectory, b.scenario));
  write_atomic(dir / "gains.bin", gains_binary(b.plan.gains));
  write_atomic(dir / "gains.json", gains_index(b.plan.gains).dump(2) + "\n");
  write_atomic(dir / "report.json", report_json(b.plan.report).dump(2) + "\n");
  nlohmann::ordered_json m;
  m["schema_version"] = 1;
  m["tool"] = "magnav";
  m["tool_version"] = MAGNAV_VERSION;
  m["scenario"] = b.scenario.name;
  m["master_seed"] = b.master_seed;
  m["status"] = ilqr::to_string(b.plan.report.status);
  m["files"] = {"scenario.resolved.cfg", "trajectory.csv", "gains.bin", "gains.json",
                "report.json"};
  write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

inline bool is_bundle(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) && std::filesystem::exists(p / "manifest.json");
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
  if (!is_bundle(dir)) throw BundleError(dir.string() + " is not a result bundle");
  Bundle b;
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  b.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  b.scenario = parse_scenario(read_file(dir / "scenario.resolved.cfg"));
  b.plan.trajectory =
      parse_trajectory_csv(read_file(dir / "trajectory.csv"), b.scenario.dt);
  b.plan.gains = parse_gains(read_file(dir / "gains.bin"),
                             nlohmann::json::parse(read_file(dir / "gains.json")));
  const auto rep = nlohmann::json::parse(read_file(dir / "report.json"));
  const std::string st = rep.value("status", "");
  for (auto s : {ilqr::SolverStatus::kConverged, ilqr::SolverStatus::kMaxIterations,
                 ilqr::SolverStatus::kDiverged, ilqr::SolverStatus::kInfeasibleStart}) {
    if (ilqr::to_string(s) == st) b.plan.report.status = s;
  }
  b.plan.report.message = rep.value("message", "");
  b.plan.report.total_inner_iterations = rep.value("total_inner_iterations", 0);
  b.plan.report.solve_seconds = rep.value("solve_seconds", 0.0);
  for (const auto& o : rep.value("outer", nlohmann::json::array())) {
    b.plan.report.outer.push_back({o.at("cost").get<double>(),
                                   o.at("max_violation").get<double>(),
                                   o.at("mu").get<double>(),
                                   o.at("inner_iterations").get<int>(),
                                   o.at("regularization").get<double>()});
  }
  if (b.plan.trajectory.horizon() != b.plan.gains.horizon()) {
    throw BundleError("bundle trajectory and gains disagree on the horizon");
  }
  return b;
}

/// Writes stats, band and per-run logs of one study cell into `dir`.
inline void write_study(const std::filesystem::path& dir, const sim::StudySummary& s,
                        const Scenario& sc) {
  const auto& logs = s.logs;
  const std::string mode = sim::to_string(s.mode);
  std::filesystem::create_directories(dir);
  write_atomic(dir / ("stats_" + mode + ".csv"), stats_csv(s, sc));
  write_atomic(dir / ("band_" + mode + ".csv"), band_csv(s, sc.dt));
  if (!logs.empty()) {
    const auto rdir = dir / ("runs_" + mode);
    std::filesystem::create_directories(rdir);
    for (std::size_t i = 0; i < logs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "run_%03zu.csv", i);
      write_atomic(rdir / name, runlog_csv(logs[i]));
    }
  }
}

}  // namespace magnav::io
