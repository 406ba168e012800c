#include "control.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace dxs {

ResidualAction clip_residual(ResidualAction a) {
  a.wrist = a.wrist.cwiseMax(-1.0).cwiseMin(1.0);
  a.fingers = a.fingers.cwiseMax(-1.0).cwiseMin(1.0);
  return a;
}

Pose6 compose_wrist(const Vec6& residual, const Vec3& plan_wrist_position,
                    const Vec3& reference_euler, const ResidualScale& scale) {
  Pose6 target;
  target.position = plan_wrist_position + scale.translation * residual.head<3>();
  for (int i = 0; i < 3; ++i) {
    target.euler[i] = wrap_angle(reference_euler[i] + scale.rotation * residual[3 + i]);
  }
  return target;
}

int FingerCoupling::group_count() const {
  int count = 0;
  for (int g : group_of) count = std::max(count, g + 1);
  return count;
}

VecX finger_targets(const FingerCoupling& coupling, const VecX& command) {
  if (coupling.lower.size() != coupling.joint_count() ||
      coupling.upper.size() != coupling.joint_count()) {
    throw Error(ErrorCode::DimensionMismatch, "finger coupling limits do not match joint count");
  }
  if (command.size() != coupling.group_count()) {
    throw Error(ErrorCode::DimensionMismatch, "finger command size does not match group count");
  }
  VecX targets(coupling.joint_count());
  for (int j = 0; j < coupling.joint_count(); ++j) {
    const double c = std::clamp(command[coupling.group_of[j]], -1.0, 1.0);
    const double t = 0.5 * (c + 1.0);  // -1 -> open (lower), +1 -> closed (upper)
    targets[j] = coupling.lower[j] + t * (coupling.upper[j] - coupling.lower[j]);
  }
  return targets;
}

Pose6 clamp_table(Pose6 target, double table_height, double margin) {
  target.position.z() = std::max(target.position.z(), table_height + margin);
  return target;
}

ArmModel ArmModel::seven_dof() {
  ArmModel arm;
  arm.axes = {Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitZ(), Vec3::UnitY(),
              Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitZ()};
  arm.link_offsets = {0.34, 0.0, 0.40, 0.0, 0.40, 0.0, 0.15};
  const int n = arm.dof();
  arm.theta = VecX::Zero(n);
  arm.lower = VecX::Constant(n, -3.0);
  arm.upper = VecX::Constant(n, 3.0);
  return arm;
}

namespace {

// Runs the forward kinematic chain, optionally capturing per-joint world
// frames for the Jacobian.
void fk_chain(const ArmModel& arm, Mat3& rotation, Vec3& position,
              std::vector<Vec3>* joint_axes, std::vector<Vec3>* joint_origins) {
  rotation = Mat3::Identity();
  position = Vec3::Zero();
  for (int i = 0; i < arm.dof(); ++i) {
    if (joint_axes != nullptr) {
      joint_axes->push_back(rotation * arm.axes[i]);
      joint_origins->push_back(position);
    }
    rotation = rotation * Eigen::AngleAxisd(arm.theta[i], arm.axes[i]).toRotationMatrix();
    position += rotation * Vec3(0.0, 0.0, arm.link_offsets[i]);
  }
}

}  // namespace

Pose6 ArmModel::end_effector() const {
  Mat3 rotation;
  Vec3 position;
  fk_chain(*this, rotation, position, nullptr, nullptr);
  return Pose6::from_rotation(position, rotation);
}

Eigen::Matrix<double, 6, Eigen::Dynamic> ArmModel::jacobian() const {
  Mat3 rotation;
  Vec3 position;
  std::vector<Vec3> axes_w;
  std::vector<Vec3> origins_w;
  fk_chain(*this, rotation, position, &axes_w, &origins_w);

  Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, dof());
  for (int i = 0; i < dof(); ++i) {
    jac.block<3, 1>(0, i) = axes_w[i].cross(position - origins_w[i]);
    jac.block<3, 1>(3, i) = axes_w[i];
  }
  return jac;
}

VecX dls_update(const Eigen::Matrix<double, 6, Eigen::Dynamic>& jacobian, const Vec6& error,
                double lambda) {
  if (lambda <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "dls damping must be positive");
  }
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  const Mat6 gram = jacobian * jacobian.transpose() + lambda * lambda * Mat6::Identity();
  return jacobian.transpose() * gram.ldlt().solve(error);
}

DlsResult dls_step(const ArmModel& arm, const Pose6& target) {
  const Pose6 current = arm.end_effector();
  Vec6 error;
  error.head<3>() = target.position - current.position;
  error.tail<3>() = orientation_error(current.rotation(), target.rotation());

  const auto jac = arm.jacobian();
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  const Mat6 gram = jac * jac.transpose() + arm.damping * arm.damping * Mat6::Identity();

  DlsResult result;
  result.dtheta = jac.transpose() * gram.ldlt().solve(error);
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(gram);
  result.condition_number = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  return result;
}

void apply_dls_step(ArmModel& arm, const DlsResult& step) {
  if (step.dtheta.size() != arm.dof()) {
    throw Error(ErrorCode::DimensionMismatch, "dls step size does not match arm dof");
  }
  arm.theta = (arm.theta + step.dtheta).cwiseMax(arm.lower).cwiseMin(arm.upper);
}

}  // namespace dxs
