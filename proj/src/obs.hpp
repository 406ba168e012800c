#pragma once

#include "env.hpp"
#include "plan.hpp"

namespace dxs {

// Observation layout, in order:
//   joint positions (22) | joint velocities (22) | smoothed action (22) |
//   fingertip poses (4*7) | initial keypoints (3k) | current keypoints (3k) |
//   future keypoints (3*15*k, track-major) | current wrist pose (6) |
//   future wrist poses (30)
// The future-wrist block is 5 poses of 6 dims (position + the constant task
// reference orientation) taken from the 15-step plan window at stride-3
// indices {0, 3, 6, 9, 12}: the plan window is position-only, and 30 slots is
// what the observation total leaves for this segment.
inline constexpr int kFutureWristCount = 5;
inline constexpr int kFutureWristStride = 3;

int observation_dim(int keypoint_count);  // 130 + 51k

// `t` counts completed steps (0 at reset); the future segments come from the
// plan window at the next control step, saturating at the horizon.
VecX assemble_observation(const SimState& state, const KeypointPlan& plan, int t,
                          const Vec3& reference_euler = Vec3::Zero());

}  // namespace dxs
