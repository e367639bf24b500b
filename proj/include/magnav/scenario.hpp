#pragma once

// Resolved problem definition. Everything here is SI; unit conversion
// happens in scenario_io.hpp.

#include <cstdint>
#include <optional>
#include <string>

#include "magnav/constraints.hpp"
#include "magnav/ilqr.hpp"
#include "magnav/plant.hpp"

namespace magnav {

struct CostWeights {
  StateVec state = StateVec::Zero();     // Q diagonal
  ControlVec input = ControlVec::Zero(); // R diagonal
  StateVec terminal = StateVec::Zero();  // Q_f diagonal
  double manipulability = 0.0;
};

enum class EkfModel { kFullDynamics, kConstantVelocity };

struct NoiseModel {
  // Variance of each measured IPM position coordinate, in variance_unit.
  double position_variance = 0.0;
  std::string variance_unit = "cm2";  // "m2" | "cm2" | "mm2"
  std::uint64_t seed = 1;
  // White acceleration disturbance on the true IPM, (m/s²)².
  double process_accel_variance = 0.0;
  int measurement_decimation = 1;
  EkfModel ekf_model = EkfModel::kFullDynamics;

  double position_variance_si() const {
    if (variance_unit == "m2") return position_variance;
    if (variance_unit == "cm2") return position_variance * 1e-4;
    if (variance_unit == "mm2") return position_variance * 1e-6;
    throw ContractError("noise.variance_unit must be m2, cm2 or mm2");
  }
};

struct Box3 {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct Scenario {
  std::string name = "unnamed";
  std::string length_unit = "m";  // as declared in the source file
  plant::PlantModel model;
  constraints::ConstraintSet constraints;
  CostWeights weights;
  Box3 workspace;
  int horizon = 300;
  double dt = 0.02;

  Vec3 initial_position = Vec3::Zero();
  Vec3 initial_velocity = Vec3::Zero();
  std::optional<JointVec> initial_joints;  // resolved by equilibrium_seed
  JointVec home_joints = JointVec::Zero();  // starting guess for the seed
  Vec3 goal_position = Vec3::Zero();
  Vec3 goal_velocity = Vec3::Zero();

  ilqr::SolverOptions solver;
  // The planner enforces inequality rows as g + backoff <= 0, so a plan
  // accepted at tolerance tol_con = backoff is feasible for the true rows.
  double constraint_backoff = 0.0;
  NoiseModel noise;
  double kappa_sentinel = kinematics::kConditionSentinel;

  StateVec initial_state() const {
    if (!initial_joints) {
      throw ContractError("scenario initial joints are unresolved");
    }
    return plant::make_state(initial_position, initial_velocity,
                             *initial_joints);
  }

  /// Goal state; joints are held at their initial configuration.
  StateVec goal_state() const {
    return plant::make_state(goal_position, goal_velocity,
                             initial_joints.value_or(home_joints));
  }
};

}  // namespace magnav
