#include "obs.hpp"

#include <algorithm>

namespace dxs {

int observation_dim(int keypoint_count) {
  if (keypoint_count <= 0)
    throw Error(ErrorCode::InvalidArgument, "keypoint count must be positive");
  return 130 + 51 * keypoint_count;
}

VecX assemble_observation(const SimState& state, const KeypointPlan& plan, int t,
                          const Vec3& reference_euler) {
  const int k = plan.keypoint_count();
  if (state.q.size() != HandModel::kDof || state.qd.size() != HandModel::kDof ||
      state.smoothed.size() != HandModel::kDof)
    throw Error(ErrorCode::DimensionMismatch, "hand state is not 22-dimensional");
  if (static_cast<int>(state.current_keypoints.size()) != k ||
      static_cast<int>(state.initial_keypoints.size()) != k)
    throw Error(ErrorCode::DimensionMismatch,
                "state keypoint count does not match the plan's tracks");
  if (t < 0 || t > plan.horizon)
    throw Error(ErrorCode::OutOfRange, "step index outside the plan horizon");

  const PlanWindow win = window(plan, std::min(t + 1, plan.horizon));

  VecX obs(observation_dim(k));
  int at = 0;
  obs.segment(at, HandModel::kDof) = state.q;
  at += HandModel::kDof;
  obs.segment(at, HandModel::kDof) = state.qd;
  at += HandModel::kDof;
  obs.segment(at, HandModel::kDof) = state.smoothed;
  at += HandModel::kDof;
  for (int f = 0; f < HandModel::kFingers; ++f) {
    obs.segment<7>(at) = state.fingertip_poses.row(f).transpose();
    at += 7;
  }
  for (int i = 0; i < k; ++i) {
    obs.segment<3>(at) = state.initial_keypoints[static_cast<size_t>(i)];
    at += 3;
  }
  for (int i = 0; i < k; ++i) {
    obs.segment<3>(at) = state.current_keypoints[static_cast<size_t>(i)];
    at += 3;
  }
  for (int i = 0; i < k; ++i) {
    for (int w = 0; w < kPlanWindowSize; ++w) {
      obs.segment<3>(at) = win.keypoints[static_cast<size_t>(i)][static_cast<size_t>(w)];
      at += 3;
    }
  }
  obs.segment<6>(at) = state.q.head<6>();  // current wrist pose
  at += 6;
  for (int i = 0; i < kFutureWristCount; ++i) {
    obs.segment<3>(at) = win.wrist[static_cast<size_t>(i * kFutureWristStride)];
    at += 3;
    obs.segment<3>(at) = reference_euler;
    at += 3;
  }
  return obs;
}

}  // namespace dxs
