#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "control.hpp"
#include "rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <algorithm>

using namespace dxs;

namespace {

Vec6 pose_error(const ArmModel& arm, const Pose6& target) {
  const Pose6 current = arm.end_effector();
  Vec6 e;
  e.head<3>() = target.position - current.position;
  e.tail<3>() = orientation_error(current.rotation(), target.rotation());
  return e;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> random_jacobian(Rng& rng, int dof) {
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, dof);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < dof; ++c) jac(r, c) = rng.uniform(-2.0, 2.0);
  }
  return jac;
}

}  // namespace

TEST_CASE("zero residual reproduces the plan wrist exactly") {
  const Vec3 plan_position(0.31, -0.12, 0.47);
  const Vec3 reference(0.1, -0.2, 0.3);
  const Pose6 target = compose_wrist(Vec6::Zero(), plan_position, reference, ResidualScale{});
  CHECK(target.position.x() == plan_position.x());
  CHECK(target.position.y() == plan_position.y());
  CHECK(target.position.z() == plan_position.z());
  for (int i = 0; i < 3; ++i) CHECK(target.euler[i] == reference[i]);
}

TEST_CASE("unit residual moves by the configured scale") {
  Vec6 residual = Vec6::Zero();
  residual[0] = 1.0;   // +x translation
  residual[5] = -1.0;  // -yaw
  const Pose6 target =
      compose_wrist(residual, Vec3(0.2, 0.0, 0.5), Vec3::Zero(), ResidualScale{0.05, 0.2});
  CHECK(target.position.x() == doctest::Approx(0.25));
  CHECK(target.position.y() == doctest::Approx(0.0));
  CHECK(target.euler[2] == doctest::Approx(-0.2));
}

TEST_CASE("residual clipping bounds every channel to [-1, 1]") {
  ResidualAction a;
  a.wrist << 3.0, -7.0, 0.5, 1.0001, -1.0001, 0.0;
  a.fingers = VecX::Constant(4, 9.0);
  const ResidualAction clipped = clip_residual(a);
  for (int i = 0; i < 6; ++i) {
    CHECK(clipped.wrist[i] <= 1.0);
    CHECK(clipped.wrist[i] >= -1.0);
  }
  CHECK(clipped.wrist[2] == doctest::Approx(0.5));
  for (int i = 0; i < 4; ++i) CHECK(clipped.fingers[i] == doctest::Approx(1.0));
}

TEST_CASE("finger command interpolates joint limits per group") {
  FingerCoupling coupling;
  coupling.group_of = {0, 0, 1, 1};
  coupling.lower = VecX::Zero(4);
  coupling.upper = (VecX(4) << 1.2, 1.4, 1.2, 1.4).finished();

  const VecX open = finger_targets(coupling, (VecX(2) << -1.0, -1.0).finished());
  for (int j = 0; j < 4; ++j) CHECK(open[j] == coupling.lower[j]);

  const VecX closed = finger_targets(coupling, (VecX(2) << 1.0, 1.0).finished());
  for (int j = 0; j < 4; ++j) CHECK(closed[j] == coupling.upper[j]);

  const VecX mixed = finger_targets(coupling, (VecX(2) << 0.0, -1.0).finished());
  CHECK(mixed[0] == doctest::Approx(0.6));
  CHECK(mixed[1] == doctest::Approx(0.7));
  CHECK(mixed[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(static_cast<void>(finger_targets(coupling, VecX::Zero(3))), Error);
}

TEST_CASE("table clamp lifts only targets below the margin") {
  Pose6 low;
  low.position = Vec3(0.3, 0.0, 0.01);
  CHECK(clamp_table(low, 0.0, 0.02).position.z() == doctest::Approx(0.02));
  Pose6 high;
  high.position = Vec3(0.3, 0.0, 0.5);
  CHECK(clamp_table(high, 0.0, 0.02).position.z() == doctest::Approx(0.5));
}

TEST_CASE("dls update with identity jacobian matches the closed form") {
  // J = I6, lambda = 0.5: dtheta = e / (1 + lambda^2) = e / 1.25.
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 6, 6>::Identity();
  Vec6 e = Vec6::Zero();
  e[0] = 0.1;
  const VecX dtheta = dls_update(jac, e, 0.5);
  CHECK(dtheta[0] == doctest::Approx(0.08).epsilon(1e-12));
  for (int i = 1; i < 6; ++i) CHECK(dtheta[i] == 0.0);
}

TEST_CASE("dls update solves the damped normal equations") {
  // Oracle: the damped pseudoinverse J^T (J J^T + l^2 I)^-1 equals the
  // normal-equations solution (J^T J + l^2 I)^-1 J^T for any J.
  Rng rng(2024, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const int dof = 4 + static_cast<int>(rng.uniform_index(6));
    const auto jac = random_jacobian(rng, dof);
    Vec6 e;
    for (int i = 0; i < 6; ++i) e[i] = rng.uniform(-1.0, 1.0);
    const double lambda = rng.uniform(0.1, 2.0);

    const VecX got = dls_update(jac, e, lambda);
    const MatX lhs =
        jac.transpose() * jac + lambda * lambda * MatX::Identity(dof, dof);
    const VecX expected = lhs.ldlt().solve(jac.transpose() * e);
    CHECK((got - expected).norm() < 1e-10);
  }
}

TEST_CASE("dls step norm is bounded by |e| / (2 lambda)") {
  // max singular-value gain of the damped pseudoinverse is s/(s^2+l^2) <= 1/(2l).
  Rng rng(2024, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto jac = random_jacobian(rng, 7);
    Vec6 e;
    for (int i = 0; i < 6; ++i) e[i] = rng.uniform(-2.0, 2.0);
    const double lambda = rng.uniform(0.05, 1.5);
    const VecX dtheta = dls_update(jac, e, lambda);
    CHECK(dtheta.norm() <= e.norm() / (2.0 * lambda) + 1e-12);
  }
}

TEST_CASE("analytic jacobian matches central finite differences") {
  Rng rng(2024, 3);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    ArmModel arm = ArmModel::seven_dof();
    for (int i = 0; i < arm.dof(); ++i) arm.theta[i] = rng.uniform(-1.5, 1.5);
    const auto jac = arm.jacobian();

    for (int i = 0; i < arm.dof(); ++i) {
      ArmModel plus = arm;
      ArmModel minus = arm;
      plus.theta[i] += h;
      minus.theta[i] -= h;
      const Pose6 fp = plus.end_effector();
      const Pose6 fm = minus.end_effector();

      const Vec3 dpos = (fp.position - fm.position) / (2.0 * h);
      CHECK((jac.block<3, 1>(0, i) - dpos).norm() < 1e-6);

      // Angular column: axis-angle of the relative rotation over 2h.
      const Eigen::AngleAxisd rel(fp.rotation() * fm.rotation().transpose());
      const Vec3 domega = rel.angle() * rel.axis() / (2.0 * h);
      if (rel.angle() > 1e-9) {
        CHECK((jac.block<3, 1>(3, i) - domega).norm() < 1e-6);
      } else {
        CHECK(jac.block<3, 1>(3, i).norm() < 1e-6);
      }
    }
  }
}

TEST_CASE("iterated dls steps reach random reachable targets") {
  // Reachable targets are poses in the workspace interior: goal postures whose
  // Jacobian has sigma_min >= 0.15 (a singular goal sits on the workspace
  // boundary, where the damped tail contraction lambda^2/(sigma^2+lambda^2)
  // cannot reach 1e-3 in 200 steps). The solver starts from a bounded random
  // offset of the goal posture, matching its warm-started tracking use.
  Rng rng(2024, 4);
  const int targets = 100;
  const int max_iters = 200;
  int converged = 0;
  for (int trial = 0; trial < targets; ++trial) {
    ArmModel goal_arm = ArmModel::seven_dof();
    for (;;) {
      for (int i = 0; i < goal_arm.dof(); ++i) goal_arm.theta[i] = rng.uniform(-1.5, 1.5);
      const auto jac = goal_arm.jacobian();
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(jac *
                                                                           jac.transpose());
      if (std::sqrt(std::max(0.0, eig.eigenvalues().minCoeff())) >= 0.15) break;
    }
    const Pose6 target = goal_arm.end_effector();

    ArmModel arm = ArmModel::seven_dof();
    for (int i = 0; i < arm.dof(); ++i) {
      arm.theta[i] = std::clamp(goal_arm.theta[i] + rng.uniform(-0.6, 0.6), -3.0, 3.0);
    }

    double err = pose_error(arm, target).norm();
    for (int iter = 0; iter < max_iters && err >= 1e-3; ++iter) {
      apply_dls_step(arm, dls_step(arm, target));
      err = pose_error(arm, target).norm();
    }
    if (err < 1e-3) ++converged;
  }
  CHECK(converged == targets);
}

TEST_CASE("zero pose error yields a zero step") {
  ArmModel arm = ArmModel::seven_dof();
  arm.theta << 0.3, -0.5, 0.2, 0.9, -0.1, 0.4, 0.0;
  const DlsResult step = dls_step(arm, arm.end_effector());
  CHECK(step.dtheta.norm() < 1e-12);
  CHECK(step.condition_number >= 1.0);
  CHECK(std::isfinite(step.condition_number));
}

TEST_CASE("damping keeps the gram matrix well conditioned at singularities") {
  ArmModel arm = ArmModel::seven_dof();  // straight-up home pose is singular
  const DlsResult step = dls_step(arm, arm.end_effector());
  // min eigenvalue of (J J^T + l^2 I) is at least l^2 = 0.25, so the
  // condition number stays finite even though J itself is rank deficient.
  CHECK(std::isfinite(step.condition_number));
  CHECK(step.condition_number < 1e4);
}

TEST_CASE("applying a step clamps joints to their limits") {
  ArmModel arm = ArmModel::seven_dof();
  DlsResult step;
  step.dtheta = VecX::Constant(7, 100.0);
  apply_dls_step(arm, step);
  for (int i = 0; i < 7; ++i) CHECK(arm.theta[i] == arm.upper[i]);

  DlsResult bad;
  bad.dtheta = VecX::Zero(3);
  CHECK_THROWS_AS(apply_dls_step(arm, bad), Error);
}
