#pragma once

#include "common.hpp"
#include "geometry.hpp"

#include <vector>

namespace dxs {

// Normalized residual action: 6 wrist offsets plus one command per finger
// group, all in [-1, 1].
struct ResidualAction {
  Vec6 wrist = Vec6::Zero();
  VecX fingers;
};

ResidualAction clip_residual(ResidualAction a);

// Physical magnitude of a unit residual.
struct ResidualScale {
  double translation = 0.05;  // meters per unit action
  double rotation = 0.2;      // radians per unit action
};

// Wrist target from the plan: position offset plus Euler offsets about the
// task-default reference orientation. A zero residual reproduces the plan
// exactly.
Pose6 compose_wrist(const Vec6& residual, const Vec3& plan_wrist_position,
                    const Vec3& reference_euler, const ResidualScale& scale);

// Coarse open/close coupling: each finger joint belongs to an action group;
// a group command of -1 maps to the lower joint limit (open), +1 to the
// upper (closed).
struct FingerCoupling {
  std::vector<int> group_of;  // joint index -> action group
  VecX lower;
  VecX upper;

  int joint_count() const { return static_cast<int>(group_of.size()); }
  int group_count() const;
};

VecX finger_targets(const FingerCoupling& coupling, const VecX& command);

// Raise a wrist target above the support surface.
Pose6 clamp_table(Pose6 target, double table_height, double margin = 0.0);

// 7-DOF serial arm with alternating z/y joint axes and an analytic geometric
// Jacobian, used to map wrist targets to arm joints.
struct ArmModel {
  std::vector<Vec3> axes;           // rotation axis of each joint, parent frame
  std::vector<double> link_offsets; // translation along local z after each joint
  VecX theta;
  VecX lower;
  VecX upper;
  double damping = 0.5;  // lambda

  static ArmModel seven_dof();
  int dof() const { return static_cast<int>(axes.size()); }
  Pose6 end_effector() const;
  Eigen::Matrix<double, 6, Eigen::Dynamic> jacobian() const;
};

// Damped pseudoinverse update: J^T (J J^T + lambda^2 I)^-1 e.
VecX dls_update(const Eigen::Matrix<double, 6, Eigen::Dynamic>& jacobian, const Vec6& error,
                double lambda);

struct DlsResult {
  VecX dtheta;
  double condition_number = 0.0;  // of (J J^T + lambda^2 I)
};

// One DLS-IK step toward a target wrist pose; applying it clamps joints to
// their limits.
DlsResult dls_step(const ArmModel& arm, const Pose6& target);
void apply_dls_step(ArmModel& arm, const DlsResult& step);

}  // namespace dxs
