#pragma once

// Scenario files: a YAML key-value tree (comments allowed). Lengths are in
// the declared `units.length`; everything is converted to SI on load.
// See README.md for the field tree.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "magnav/problem.hpp"
#include "magnav/scenario.hpp"

namespace magnav::io {

inline constexpr int kScenarioSchemaVersion = 1;

struct Diagnostic {
  std::string field;
  std::string message;
  int line = -1;    // 1-based, -1 when not tied to a source position
  int column = -1;

  std::string str() const {
    std::ostringstream os;
    if (line >= 0) os << "line " << line << ", column " << column << ": ";
    os << field << ": " << message;
    return os.str();
  }
};

/// Syntax errors (kind kParse) and semantic/field errors (kInvalid).
class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { kParse, kInvalid, kIo };

  ScenarioError(Kind kind, std::vector<Diagnostic> diags)
      : std::runtime_error(join(diags)), kind_(kind), diags_(std::move(diags)) {}

  Kind kind() const { return kind_; }
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  static std::string join(const std::vector<Diagnostic>& d) {
    std::string s;
    for (const auto& x : d) {
      if (!s.empty()) s += "\n";
      s += x.str();
    }
    return s;
  }
  Kind kind_;
  std::vector<Diagnostic> diags_;
};

inline double length_scale(const std::string& unit) {
  if (unit == "m") return 1.0;
  if (unit == "cm") return 0.01;
  if (unit == "mm") return 0.001;
  throw ContractError("units.length must be m, cm or mm, got '" + unit + "'");
}

namespace detail {

/// Reads typed values from a YAML tree, recording field-level diagnostics
/// instead of throwing on the first problem.
class Reader {
 public:
  std::vector<Diagnostic> diags;

  void error(const YAML::Node& n, const std::string& field,
             const std::string& msg) {
    Diagnostic d{field, msg};
    if (n.IsDefined() && n.Mark().line >= 0) {
      d.line = n.Mark().line + 1;
      d.column = n.Mark().column + 1;
    }
    diags.push_back(std::move(d));
  }

  void check_keys(const YAML::Node& map, const std::string& path,
                  const std::set<std::string>& allowed) {
    if (!map.IsDefined() || map.IsNull()) return;
    if (!map.IsMap()) {
      error(map, path, "expected a mapping");
      return;
    }
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        error(kv.first, path.empty() ? key : path + "." + key, "unknown field");
      }
    }
  }

  bool scalar(const YAML::Node& n, const std::string& field, double& out) {
    if (!n.IsDefined() || n.IsNull()) return false;
    try {
      out = n.as<double>();
      return true;
    } catch (const YAML::Exception&) {
      error(n, field, "expected a number");
      return false;
    }
  }

  bool integer(const YAML::Node& n, const std::string& field, long long& out) {
    if (!n.IsDefined() || n.IsNull()) return false;
    try {
      out = n.as<long long>();
      return true;
    } catch (const YAML::Exception&) {
      error(n, field, "expected an integer");
      return false;
    }
  }

  bool boolean(const YAML::Node& n, const std::string& field, bool& out) {
    if (!n.IsDefined() || n.IsNull()) return false;
    try {
      out = n.as<bool>();
      return true;
    } catch (const YAML::Exception&) {
      error(n, field, "expected true or false");
      return false;
    }
  }

  bool string(const YAML::Node& n, const std::string& field, std::string& out) {
    if (!n.IsDefined() || n.IsNull()) return false;
    if (!n.IsScalar()) {
      error(n, field, "expected a string");
      return false;
    }
    out = n.as<std::string>();
    return true;
  }

  template <int N>
  bool vector(const YAML::Node& n, const std::string& field,
              Eigen::Matrix<double, N, 1>& out, double scale = 1.0) {
    if (!n.IsDefined() || n.IsNull()) return false;
    if (!n.IsSequence() || static_cast<int>(n.size()) != N) {
      error(n, field, "expected a list of " + std::to_string(N) + " numbers");
      return false;
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
      try {
        v[i] = n[i].as<double>() * scale;
      } catch (const YAML::Exception&) {
        error(n[i], field + "[" + std::to_string(i) + "]", "expected a number");
        return false;
      }
    }
    out = v;
    return true;
  }

  /// Scalar broadcast or a full N-vector.
  template <int N>
  bool broadcast(const YAML::Node& n, const std::string& field,
                 Eigen::Matrix<double, N, 1>& out) {
    if (!n.IsDefined() || n.IsNull()) return false;
    if (n.IsScalar()) {
      double v;
      if (!scalar(n, field, v)) return false;
      out.setConstant(v);
      return true;
    }
    return vector<N>(n, field, out);
  }
};

inline Mat3 rpy_to_matrix(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy[2], Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy[1], Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy[0], Vec3::UnitX()))
      .toRotationMatrix();
}

inline Vec3 matrix_to_rpy(const Mat3& r) {
  // Inverse of Rz(yaw) Ry(pitch) Rx(roll).
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

inline Scenario parse_tree(const YAML::Node& root) {
  Reader rd;
  Scenario sc;
  if (!root.IsMap()) {
    rd.error(root, "<root>", "scenario file must be a mapping");
    throw ScenarioError(ScenarioError::Kind::kInvalid, rd.diags);
  }
  rd.check_keys(root, "",
                {"schema_version", "name", "units", "kinematics", "magnets",
                 "fluid", "workspace", "constraints", "cost", "horizon",
                 "initial", "goal", "solver", "augmented_lagrangian", "noise",
                 "kappa_sentinel"});

  long long schema = kScenarioSchemaVersion;
  rd.integer(root["schema_version"], "schema_version", schema);
  if (schema != kScenarioSchemaVersion) {
    rd.error(root["schema_version"], "schema_version",
             "unsupported version " + std::to_string(schema));
  }
  rd.string(root["name"], "name", sc.name);

  const auto units = root["units"];
  rd.check_keys(units, "units", {"length"});
  rd.string(units["length"], "units.length", sc.length_unit);
  double ls = 1.0;
  try {
    ls = length_scale(sc.length_unit);
  } catch (const ContractError& e) {
    rd.error(units["length"], "units.length", e.what());
  }

  // kinematics
  const auto kin = root["kinematics"];
  rd.check_keys(kin, "kinematics", {"convention", "dh", "tool", "home"});
  if (kin.IsDefined()) {
    std::string conv = "classic";
    rd.string(kin["convention"], "kinematics.convention", conv);
    if (conv == "classic") {
      sc.model.dh.convention = kinematics::DhConvention::kClassic;
    } else if (conv == "modified") {
      sc.model.dh.convention = kinematics::DhConvention::kModified;
    } else {
      rd.error(kin["convention"], "kinematics.convention",
               "must be 'classic' or 'modified'");
    }
    const auto dh = kin["dh"];
    if (dh.IsDefined()) {
      if (!dh.IsSequence()) {
        rd.error(dh, "kinematics.dh", "expected a list of [a, d, alpha, theta_offset]");
      } else {
        sc.model.dh.rows.clear();
        for (std::size_t i = 0; i < dh.size(); ++i) {
          Eigen::Vector4d row;
          if (rd.vector<4>(dh[i], "kinematics.dh[" + std::to_string(i) + "]", row)) {
            sc.model.dh.rows.push_back({row[0] * ls, row[1] * ls, row[2], row[3]});
          }
        }
      }
    }
    const auto tool = kin["tool"];
    rd.check_keys(tool, "kinematics.tool", {"translation", "rpy"});
    if (tool.IsDefined()) {
      Vec3 t = sc.model.dh.tool_transform.topRightCorner<3, 1>();
      Vec3 rpy = matrix_to_rpy(sc.model.dh.tool_transform.topLeftCorner<3, 3>());
      rd.vector<3>(tool["translation"], "kinematics.tool.translation", t, ls);
      rd.vector<3>(tool["rpy"], "kinematics.tool.rpy", rpy);
      sc.model.dh.tool_transform.setIdentity();
      sc.model.dh.tool_transform.topLeftCorner<3, 3>() = rpy_to_matrix(rpy);
      sc.model.dh.tool_transform.topRightCorner<3, 1>() = t;
    }
    rd.vector<kNumJoints>(kin["home"], "kinematics.home", sc.home_joints);
  }

  // magnets
  const auto mag = root["magnets"];
  rd.check_keys(mag, "magnets", {"epm", "ipm", "min_separation"});
  if (mag.IsDefined()) {
    rd.check_keys(mag["epm"], "magnets.epm", {"moment", "axis"});
    rd.check_keys(mag["ipm"], "magnets.ipm", {"moment"});
    rd.scalar(mag["epm"]["moment"], "magnets.epm.moment",
              sc.model.epm.dipole_magnitude);
    rd.vector<3>(mag["epm"]["axis"], "magnets.epm.axis",
                 sc.model.epm.axis_in_mount_frame);
    rd.scalar(mag["ipm"]["moment"], "magnets.ipm.moment",
              sc.model.ipm.dipole_magnitude);
    if (rd.scalar(mag["min_separation"], "magnets.min_separation",
                  sc.model.min_separation)) {
      sc.model.min_separation *= ls;
    }
  }

  // fluid (SI regardless of units.length)
  const auto fl = root["fluid"];
  rd.check_keys(fl, "fluid", {"drag_coefficient", "effective_weight", "ipm_mass"});
  if (fl.IsDefined()) {
    rd.scalar(fl["drag_coefficient"], "fluid.drag_coefficient",
              sc.model.fluid.drag_coefficient);
    const auto w = fl["effective_weight"];
    if (w.IsDefined() && w.IsScalar()) {
      double wz;
      if (rd.scalar(w, "fluid.effective_weight", wz)) {
        sc.model.fluid.effective_weight = Vec3(0.0, 0.0, wz);
      }
    } else {
      rd.vector<3>(w, "fluid.effective_weight", sc.model.fluid.effective_weight);
    }
    rd.scalar(fl["ipm_mass"], "fluid.ipm_mass", sc.model.fluid.ipm_mass);
  }

  const auto ws = root["workspace"];
  rd.check_keys(ws, "workspace", {"min", "max"});
  rd.vector<3>(ws["min"], "workspace.min", sc.workspace.min, ls);
  rd.vector<3>(ws["max"], "workspace.max", sc.workspace.max, ls);

  // constraints
  const auto con = root["constraints"];
  rd.check_keys(con, "constraints",
                {"joint_limits", "input_limits", "ipm_velocity",
                 "epm_min_position", "obstacles", "orientation"});
  auto& cs = sc.constraints;
  if (con.IsDefined()) {
    rd.check_keys(con["joint_limits"], "constraints.joint_limits", {"min", "max"});
    rd.vector<kNumJoints>(con["joint_limits"]["min"], "constraints.joint_limits.min", cs.q_min);
    rd.vector<kNumJoints>(con["joint_limits"]["max"], "constraints.joint_limits.max", cs.q_max);
    rd.check_keys(con["input_limits"], "constraints.input_limits", {"min", "max"});
    rd.vector<kControlDim>(con["input_limits"]["min"], "constraints.input_limits.min", cs.u_min);
    rd.vector<kControlDim>(con["input_limits"]["max"], "constraints.input_limits.max", cs.u_max);
    rd.check_keys(con["ipm_velocity"], "constraints.ipm_velocity", {"min", "max"});
    rd.vector<3>(con["ipm_velocity"]["min"], "constraints.ipm_velocity.min", cs.v_min, ls);
    rd.vector<3>(con["ipm_velocity"]["max"], "constraints.ipm_velocity.max", cs.v_max, ls);
    const auto floor = con["epm_min_position"];
    if (floor.IsDefined() && !floor.IsNull()) {
      if (!floor.IsSequence() || floor.size() != 3) {
        rd.error(floor, "constraints.epm_min_position",
                 "expected [x, y, z] with null for unbounded axes");
      } else {
        for (int i = 0; i < 3; ++i) {
          double v;
          if (rd.scalar(floor[i], "constraints.epm_min_position[" + std::to_string(i) + "]", v)) {
            cs.epm_min_position[i] = v * ls;
          } else {
            cs.epm_min_position[i].reset();
          }
        }
      }
    }
    const auto obs = con["obstacles"];
    if (obs.IsDefined() && !obs.IsNull()) {
      if (!obs.IsSequence()) {
        rd.error(obs, "constraints.obstacles", "expected a list");
      } else {
        for (std::size_t i = 0; i < obs.size(); ++i) {
          const std::string f = "constraints.obstacles[" + std::to_string(i) + "]";
          rd.check_keys(obs[i], f, {"center", "radius", "margin"});
          constraints::Obstacle ob;
          rd.vector<3>(obs[i]["center"], f + ".center", ob.center, ls);
          if (rd.scalar(obs[i]["radius"], f + ".radius", ob.radius)) ob.radius *= ls;
          if (rd.scalar(obs[i]["margin"], f + ".margin", ob.margin)) ob.margin *= ls;
          cs.obstacles.push_back(ob);
        }
      }
    }
    const auto ori = con["orientation"];
    rd.check_keys(ori, "constraints.orientation", {"enabled", "target", "every_step"});
    if (ori.IsDefined()) {
      cs.orientation.enabled = true;
      rd.boolean(ori["enabled"], "constraints.orientation.enabled", cs.orientation.enabled);
      Vec3 t = cs.orientation.direction;
      if (rd.vector<3>(ori["target"], "constraints.orientation.target", t)) {
        if (t.norm() == 0.0) {
          rd.error(ori["target"], "constraints.orientation.target", "must be nonzero");
        } else {
          cs.orientation.direction = t.normalized();
        }
      }
      rd.boolean(ori["every_step"], "constraints.orientation.every_step",
                 cs.orientation.every_step);
    }
  }

  // cost (SI)
  const auto cost = root["cost"];
  rd.check_keys(cost, "cost", {"state", "input", "terminal", "manipulability"});
  auto read_state_weights = [&](const YAML::Node& n, const std::string& f,
                                StateVec& out) {
    rd.check_keys(n, f, {"position", "velocity", "joints"});
    if (!n.IsDefined()) return;
    Vec3 p = out.segment<3>(plant::kPos), v = out.segment<3>(plant::kVel);
    JointVec q = out.segment<kNumJoints>(plant::kJoints);
    rd.broadcast<3>(n["position"], f + ".position", p);
    rd.broadcast<3>(n["velocity"], f + ".velocity", v);
    rd.broadcast<kNumJoints>(n["joints"], f + ".joints", q);
    out << p, v, q;
  };
  if (cost.IsDefined()) {
    read_state_weights(cost["state"], "cost.state", sc.weights.state);
    read_state_weights(cost["terminal"], "cost.terminal", sc.weights.terminal);
    rd.broadcast<kControlDim>(cost["input"], "cost.input", sc.weights.input);
    rd.scalar(cost["manipulability"], "cost.manipulability", sc.weights.manipulability);
  }

  const auto hz = root["horizon"];
  rd.check_keys(hz, "horizon", {"steps", "dt"});
  long long steps = sc.horizon;
  if (rd.integer(hz["steps"], "horizon.steps", steps)) sc.horizon = static_cast<int>(steps);
  rd.scalar(hz["dt"], "horizon.dt", sc.dt);

  const auto ini = root["initial"];
  rd.check_keys(ini, "initial", {"position", "velocity", "joints"});
  if (!ini.IsDefined() || !ini["position"].IsDefined()) {
    rd.error(root, "initial.position", "required field missing");
  }
  rd.vector<3>(ini["position"], "initial.position", sc.initial_position, ls);
  rd.vector<3>(ini["velocity"], "initial.velocity", sc.initial_velocity, ls);
  JointVec q0;
  if (rd.vector<kNumJoints>(ini["joints"], "initial.joints", q0)) sc.initial_joints = q0;

  const auto goal = root["goal"];
  rd.check_keys(goal, "goal", {"position", "velocity"});
  if (!goal.IsDefined() || !goal["position"].IsDefined()) {
    rd.error(root, "goal.position", "required field missing");
  }
  rd.vector<3>(goal["position"], "goal.position", sc.goal_position, ls);
  rd.vector<3>(goal["velocity"], "goal.velocity", sc.goal_velocity, ls);

  const auto sv = root["solver"];
  rd.check_keys(sv, "solver",
                {"rho_initial", "rho_increase", "rho_decrease", "rho_max",
                 "rho_min", "tol_cost", "tol_con", "max_inner", "max_outer",
                 "line_search_steps", "constraint_backoff"});
  if (sv.IsDefined()) {
    auto& o = sc.solver;
    rd.scalar(sv["rho_initial"], "solver.rho_initial", o.rho_initial);
    rd.scalar(sv["rho_increase"], "solver.rho_increase", o.rho_increase);
    rd.scalar(sv["rho_decrease"], "solver.rho_decrease", o.rho_decrease);
    rd.scalar(sv["rho_max"], "solver.rho_max", o.rho_max);
    rd.scalar(sv["rho_min"], "solver.rho_min", o.rho_min);
    rd.scalar(sv["tol_cost"], "solver.tol_cost", o.tol_cost);
    rd.scalar(sv["tol_con"], "solver.tol_con", o.tol_con);
    long long v;
    if (rd.integer(sv["max_inner"], "solver.max_inner", v)) o.max_inner = static_cast<int>(v);
    if (rd.integer(sv["max_outer"], "solver.max_outer", v)) o.max_outer = static_cast<int>(v);
    if (rd.integer(sv["line_search_steps"], "solver.line_search_steps", v)) {
      o.line_search_steps = static_cast<int>(v);
    }
    rd.scalar(sv["constraint_backoff"], "solver.constraint_backoff", sc.constraint_backoff);
  }
  const auto al = root["augmented_lagrangian"];
  rd.check_keys(al, "augmented_lagrangian", {"mu_initial", "mu_scale", "mu_max"});
  if (al.IsDefined()) {
    rd.scalar(al["mu_initial"], "augmented_lagrangian.mu_initial", sc.solver.al.mu_initial);
    rd.scalar(al["mu_scale"], "augmented_lagrangian.mu_scale", sc.solver.al.mu_scale);
    rd.scalar(al["mu_max"], "augmented_lagrangian.mu_max", sc.solver.al.mu_max);
  }

  const auto nz = root["noise"];
  rd.check_keys(nz, "noise",
                {"position_variance", "variance_unit", "seed",
                 "process_accel_variance", "measurement_decimation", "ekf_model"});
  if (nz.IsDefined()) {
    auto& n = sc.noise;
    rd.scalar(nz["position_variance"], "noise.position_variance", n.position_variance);
    rd.string(nz["variance_unit"], "noise.variance_unit", n.variance_unit);
    long long v;
    if (rd.integer(nz["seed"], "noise.seed", v)) n.seed = static_cast<std::uint64_t>(v);
    rd.scalar(nz["process_accel_variance"], "noise.process_accel_variance",
              n.process_accel_variance);
    if (rd.integer(nz["measurement_decimation"], "noise.measurement_decimation", v)) {
      n.measurement_decimation = static_cast<int>(v);
    }
    std::string model = "full";
    if (rd.string(nz["ekf_model"], "noise.ekf_model", model)) {
      if (model == "full") {
        n.ekf_model = EkfModel::kFullDynamics;
      } else if (model == "constant_velocity") {
        n.ekf_model = EkfModel::kConstantVelocity;
      } else {
        rd.error(nz["ekf_model"], "noise.ekf_model",
                 "must be 'full' or 'constant_velocity'");
      }
    }
  }
  rd.scalar(root["kappa_sentinel"], "kappa_sentinel", sc.kappa_sentinel);

  if (!rd.diags.empty()) throw ScenarioError(ScenarioError::Kind::kInvalid, rd.diags);
  return sc;
}

}  // namespace detail

/// Semantic checks on a parsed (SI) scenario. Returns all findings.
inline std::vector<Diagnostic> check_scenario(const Scenario& sc) {
  std::vector<Diagnostic> d;
  auto add = [&](std::string f, std::string m) {
    d.push_back({std::move(f), std::move(m)});
  };
  const auto& cs = sc.constraints;
  if (sc.model.dh.num_joints() != kNumJoints) {
    add("kinematics.dh", "expected " + std::to_string(kNumJoints) + " rows, got " +
                             std::to_string(sc.model.dh.num_joints()));
  }
  try {
    sc.model.dh.validate();
  } catch (const ContractError& e) {
    add("kinematics.tool", e.what());
  }
  try {
    sc.model.epm.validate("magnets.epm");
  } catch (const ContractError& e) {
    add("magnets.epm", e.what());
  }
  if (!(sc.model.ipm.dipole_magnitude > 0.0)) add("magnets.ipm.moment", "must be > 0");
  if (!(sc.model.min_separation > 0.0)) add("magnets.min_separation", "must be > 0");
  try {
    sc.model.fluid.validate();
  } catch (const ContractError& e) {
    add("fluid", e.what());
  }
  for (int i = 0; i < kNumJoints; ++i) {
    if (!(cs.q_min[i] < cs.q_max[i])) {
      add("constraints.joint_limits",
          "joint " + std::to_string(i) + ": min must be < max (q_min=" +
              std::to_string(cs.q_min[i]) + ", q_max=" + std::to_string(cs.q_max[i]) + ")");
    }
    if (!(cs.u_min[i] <= cs.u_max[i])) {
      add("constraints.input_limits",
          "joint " + std::to_string(i) + ": min must be <= max");
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (!(cs.v_min[i] <= cs.v_max[i])) {
      add("constraints.ipm_velocity", "axis " + std::to_string(i) + ": min must be <= max");
    }
    if (!(sc.workspace.min[i] < sc.workspace.max[i])) {
      add("workspace", "axis " + std::to_string(i) + ": min must be < max");
    }
  }
  for (std::size_t i = 0; i < cs.obstacles.size(); ++i) {
    const auto& ob = cs.obstacles[i];
    const std::string f = "constraints.obstacles[" + std::to_string(i) + "]";
    if (!(ob.radius > 0.0)) add(f + ".radius", "must be > 0");
    if (!(ob.margin >= 0.0)) add(f + ".margin", "must be >= 0");
    const Vec3 r = Vec3::Constant(ob.radius);
    if (!sc.workspace.contains(ob.center - r) || !sc.workspace.contains(ob.center + r)) {
      add(f, "obstacle sphere must lie inside the workspace box");
    }
    if (!(constraints::obstacle_clearance(sc.initial_position, ob) > 0.0)) {
      add(f, "start lies inside the obstacle (including its margin)");
    }
    if (!(constraints::obstacle_clearance(sc.goal_position, ob) > 0.0)) {
      add(f, "goal lies inside the obstacle (including its margin)");
    }
  }
  if (cs.orientation.enabled && std::abs(cs.orientation.direction.norm() - 1.0) > 1e-9) {
    add("constraints.orientation.target", "must be a unit vector");
  }
  if (!sc.workspace.contains(sc.initial_position)) {
    add("initial.position", "outside the workspace box");
  }
  if (!sc.workspace.contains(sc.goal_position)) {
    add("goal.position", "outside the workspace box");
  }
  if (sc.horizon < 1) add("horizon.steps", "must be >= 1");
  if (!(sc.dt > 0.0)) add("horizon.dt", "must be > 0");
  const auto nonneg = [&](const auto& v, const std::string& f) {
    if ((v.array() < 0.0).any()) add(f, "weights must be >= 0");
  };
  nonneg(sc.weights.state, "cost.state");
  nonneg(sc.weights.input, "cost.input");
  nonneg(sc.weights.terminal, "cost.terminal");
  if (!(sc.weights.manipulability >= 0.0)) add("cost.manipulability", "must be >= 0");
  if (!(sc.solver.al.mu_initial > 0.0)) add("augmented_lagrangian.mu_initial", "must be > 0");
  if (!(sc.solver.al.mu_scale >= 1.0)) add("augmented_lagrangian.mu_scale", "must be >= 1");
  if (!(sc.noise.position_variance >= 0.0)) add("noise.position_variance", "must be >= 0");
  if (!(sc.noise.process_accel_variance >= 0.0)) {
    add("noise.process_accel_variance", "must be >= 0");
  }
  if (sc.noise.measurement_decimation < 1) add("noise.measurement_decimation", "must be >= 1");
  try {
    sc.noise.position_variance_si();
  } catch (const ContractError& e) {
    add("noise.variance_unit", e.what());
  }
  if (sc.initial_joints && d.empty()) {
    for (int i = 0; i < kNumJoints; ++i) {
      if ((*sc.initial_joints)[i] < cs.q_min[i] || (*sc.initial_joints)[i] > cs.q_max[i]) {
        add("initial.joints", "joint " + std::to_string(i) + " outside its limits");
      }
    }
    const auto pose = kinematics::forward_kinematics(sc.model.dh, *sc.initial_joints);
    const double sep = (sc.initial_position - pose.position).norm();
    if (!(sep >= sc.model.min_separation)) {
      add("initial", "IPM-EPM separation " + std::to_string(sep) +
                         " m is below magnets.min_separation");
    }
  }
  return d;
}

namespace detail {

inline void locate_in(const YAML::Node& node, const std::vector<std::string>& parts,
                      std::size_t i, Diagnostic& d) {
  if (!node.IsDefined() || node.IsNull()) return;
  if (node.Mark().line >= 0) {
    d.line = node.Mark().line + 1;
    d.column = node.Mark().column + 1;
  }
  if (i == parts.size()) return;
  std::string key = parts[i];
  int index = -1;
  if (const auto b = key.find('['); b != std::string::npos) {
    index = std::stoi(key.substr(b + 1));
    key = key.substr(0, b);
  }
  if (!node.IsMap()) return;
  const YAML::Node child = node[key];
  if (index >= 0) {
    if (child.IsSequence() && index < static_cast<int>(child.size())) {
      locate_in(child[static_cast<std::size_t>(index)], parts, i + 1, d);
    } else {
      locate_in(child, parts, parts.size(), d);
    }
  } else {
    locate_in(child, parts, i + 1, d);
  }
}

/// Points semantic diagnostics at the deepest node of their field path.
inline void locate(const YAML::Node& root, std::vector<Diagnostic>& diags) {
  for (auto& d : diags) {
    if (d.line >= 0) continue;
    std::vector<std::string> parts;
    std::stringstream ss(d.field);
    for (std::string t; std::getline(ss, t, '.');) parts.push_back(t);
    const std::string first = parts.empty() ? "" : parts[0].substr(0, parts[0].find('['));
    if (first.empty() || !root.IsMap() || !root[first]) continue;
    locate_in(root, parts, 0, d);
  }
}

}  // namespace detail

struct LoadOptions {
  // Solve for the initial joints by force balance when the file omits them.
  bool resolve_joints = true;
};

inline Scenario parse_scenario(const std::string& text, const LoadOptions& opt = {}) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(ScenarioError::Kind::kParse,
                        {{"<syntax>", e.msg, e.mark.line + 1, e.mark.column + 1}});
  }
  Scenario sc = detail::parse_tree(root);
  auto diags = check_scenario(sc);
  detail::locate(root, diags);
  if (!diags.empty()) throw ScenarioError(ScenarioError::Kind::kInvalid, diags);
  if (opt.resolve_joints && !sc.initial_joints) {
    try {
      resolve_initial_joints(sc);
    } catch (const EquilibriumError& e) {
      throw ScenarioError(ScenarioError::Kind::kInvalid, {{"initial.joints", e.what()}});
    }
    diags = check_scenario(sc);
    detail::locate(root, diags);
    if (!diags.empty()) throw ScenarioError(ScenarioError::Kind::kInvalid, diags);
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path,
                              const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError(ScenarioError::Kind::kIo,
                        {{path.string(), "cannot open scenario file"}});
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), opt);
}

/// Serializes a scenario in SI with every default expanded.
inline std::string emit_scenario(const Scenario& sc) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto seq = [&](const auto& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i];
    out << YAML::EndSeq;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << kScenarioSchemaVersion;
  out << YAML::Key << "name" << YAML::Value << sc.name;
  out << YAML::Key << "units" << YAML::Value << YAML::BeginMap
      << YAML::Key << "length" << YAML::Value << "m" << YAML::EndMap;

  out << YAML::Key << "kinematics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "convention" << YAML::Value
      << (sc.model.dh.convention == kinematics::DhConvention::kClassic ? "classic"
                                                                       : "modified");
  out << YAML::Key << "dh" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : sc.model.dh.rows) {
    seq(Eigen::Vector4d(r.a, r.d, r.alpha, r.theta_offset));
  }
  out << YAML::EndSeq;
  out << YAML::Key << "tool" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "translation" << YAML::Value;
  seq(Vec3(sc.model.dh.tool_transform.topRightCorner<3, 1>()));
  out << YAML::Key << "rpy" << YAML::Value;
  seq(detail::matrix_to_rpy(sc.model.dh.tool_transform.topLeftCorner<3, 3>()));
  out << YAML::EndMap;
  out << YAML::Key << "home" << YAML::Value;
  seq(sc.home_joints);
  out << YAML::EndMap;

  out << YAML::Key << "magnets" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epm" << YAML::Value << YAML::BeginMap
      << YAML::Key << "moment" << YAML::Value << sc.model.epm.dipole_magnitude
      << YAML::Key << "axis" << YAML::Value;
  seq(sc.model.epm.axis_in_mount_frame);
  out << YAML::EndMap;
  out << YAML::Key << "ipm" << YAML::Value << YAML::BeginMap << YAML::Key
      << "moment" << YAML::Value << sc.model.ipm.dipole_magnitude << YAML::EndMap;
  out << YAML::Key << "min_separation" << YAML::Value << sc.model.min_separation;
  out << YAML::EndMap;

  out << YAML::Key << "fluid" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "drag_coefficient" << YAML::Value << sc.model.fluid.drag_coefficient;
  out << YAML::Key << "effective_weight" << YAML::Value;
  seq(sc.model.fluid.effective_weight);
  out << YAML::Key << "ipm_mass" << YAML::Value << sc.model.fluid.ipm_mass;
  out << YAML::EndMap;

  out << YAML::Key << "workspace" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "min" << YAML::Value;
  seq(sc.workspace.min);
  out << YAML::Key << "max" << YAML::Value;
  seq(sc.workspace.max);
  out << YAML::EndMap;

  const auto& cs = sc.constraints;
  out << YAML::Key << "constraints" << YAML::Value << YAML::BeginMap;
  auto bounds = [&](const char* key, const auto& lo, const auto& hi) {
    out << YAML::Key << key << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "min" << YAML::Value;
    seq(lo);
    out << YAML::Key << "max" << YAML::Value;
    seq(hi);
    out << YAML::EndMap;
  };
  bounds("joint_limits", cs.q_min, cs.q_max);
  bounds("input_limits", cs.u_min, cs.u_max);
  bounds("ipm_velocity", cs.v_min, cs.v_max);
  out << YAML::Key << "epm_min_position" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& b : cs.epm_min_position) {
    if (b) {
      out << *b;
    } else {
      out << YAML::Null;
    }
  }
  out << YAML::EndSeq;
  out << YAML::Key << "obstacles" << YAML::Value << YAML::BeginSeq;
  for (const auto& ob : cs.obstacles) {
    out << YAML::BeginMap << YAML::Key << "center" << YAML::Value;
    seq(ob.center);
    out << YAML::Key << "radius" << YAML::Value << ob.radius << YAML::Key
        << "margin" << YAML::Value << ob.margin << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "orientation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << cs.orientation.enabled;
  out << YAML::Key << "target" << YAML::Value;
  seq(cs.orientation.direction);
  out << YAML::Key << "every_step" << YAML::Value << cs.orientation.every_step;
  out << YAML::EndMap;
  out << YAML::EndMap;

  auto state_weights = [&](const char* key, const StateVec& w) {
    out << YAML::Key << key << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "position" << YAML::Value;
    seq(Vec3(w.segment<3>(plant::kPos)));
    out << YAML::Key << "velocity" << YAML::Value;
    seq(Vec3(w.segment<3>(plant::kVel)));
    out << YAML::Key << "joints" << YAML::Value;
    seq(JointVec(w.segment<kNumJoints>(plant::kJoints)));
    out << YAML::EndMap;
  };
  out << YAML::Key << "cost" << YAML::Value << YAML::BeginMap;
  state_weights("state", sc.weights.state);
  out << YAML::Key << "input" << YAML::Value;
  seq(sc.weights.input);
  state_weights("terminal", sc.weights.terminal);
  out << YAML::Key << "manipulability" << YAML::Value << sc.weights.manipulability;
  out << YAML::EndMap;

  out << YAML::Key << "horizon" << YAML::Value << YAML::BeginMap << YAML::Key
      << "steps" << YAML::Value << sc.horizon << YAML::Key << "dt"
      << YAML::Value << sc.dt << YAML::EndMap;

  out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "position" << YAML::Value;
  seq(sc.initial_position);
  out << YAML::Key << "velocity" << YAML::Value;
  seq(sc.initial_velocity);
  if (sc.initial_joints) {
    out << YAML::Key << "joints" << YAML::Value;
    seq(*sc.initial_joints);
  }
  out << YAML::EndMap;
  out << YAML::Key << "goal" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "position" << YAML::Value;
  seq(sc.goal_position);
  out << YAML::Key << "velocity" << YAML::Value;
  seq(sc.goal_velocity);
  out << YAML::EndMap;

  const auto& o = sc.solver;
  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rho_initial" << YAML::Value << o.rho_initial;
  out << YAML::Key << "rho_increase" << YAML::Value << o.rho_increase;
  out << YAML::Key << "rho_decrease" << YAML::Value << o.rho_decrease;
  out << YAML::Key << "rho_max" << YAML::Value << o.rho_max;
  out << YAML::Key << "rho_min" << YAML::Value << o.rho_min;
  out << YAML::Key << "tol_cost" << YAML::Value << o.tol_cost;
  out << YAML::Key << "tol_con" << YAML::Value << o.tol_con;
  out << YAML::Key << "max_inner" << YAML::Value << o.max_inner;
  out << YAML::Key << "max_outer" << YAML::Value << o.max_outer;
  out << YAML::Key << "line_search_steps" << YAML::Value << o.line_search_steps;
  out << YAML::Key << "constraint_backoff" << YAML::Value << sc.constraint_backoff;
  out << YAML::EndMap;
  out << YAML::Key << "augmented_lagrangian" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mu_initial" << YAML::Value << o.al.mu_initial;
  out << YAML::Key << "mu_scale" << YAML::Value << o.al.mu_scale;
  out << YAML::Key << "mu_max" << YAML::Value << o.al.mu_max;
  out << YAML::EndMap;

  const auto& n = sc.noise;
  out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "position_variance" << YAML::Value << n.position_variance;
  out << YAML::Key << "variance_unit" << YAML::Value << n.variance_unit;
  out << YAML::Key << "seed" << YAML::Value << static_cast<long long>(n.seed);
  out << YAML::Key << "process_accel_variance" << YAML::Value << n.process_accel_variance;
  out << YAML::Key << "measurement_decimation" << YAML::Value << n.measurement_decimation;
  out << YAML::Key << "ekf_model" << YAML::Value
      << (n.ekf_model == EkfModel::kFullDynamics ? "full" : "constant_velocity");
  out << YAML::EndMap;
  out << YAML::Key << "kappa_sentinel" << YAML::Value << sc.kappa_sentinel;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace magnav::io
