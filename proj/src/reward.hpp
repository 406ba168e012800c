#pragma once

#include "common.hpp"

#include <vector>

namespace dxs {

struct RewardParams {
  double beta = 20.0;    // tracking sharpness, 1/m
  double epsilon = 0.01; // contact-term offset

  void validate() const {
    if (beta <= 0.0 || epsilon <= 0.0)
      throw Error(ErrorCode::InvalidArgument, "reward parameters must be positive");
  }
};

// Mean Euclidean distance between tracked and planned keypoints. Shared by
// the reward and the early-termination check.
double tracking_error(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned);

// Dense task-agnostic reward: keypoint tracking term plus contact bonus.
// exp(-(beta/k) * sum ||x_hat - x_tilde||) + exp(-1 / (N_contact + eps)).
double keypoint_reward(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned,
                       int n_contact, const RewardParams& params);

}  // namespace dxs
