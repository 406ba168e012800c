#include "reward.hpp"

#include <cmath>

namespace dxs {

double tracking_error(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned) {
  if (tracked.size() != planned.size() || tracked.empty())
    throw Error(ErrorCode::DimensionMismatch, "keypoint set sizes differ");
  double sum = 0.0;
  for (size_t i = 0; i < tracked.size(); ++i) sum += (tracked[i] - planned[i]).norm();
  return sum / static_cast<double>(tracked.size());
}

double keypoint_reward(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned,
                       int n_contact, const RewardParams& params) {
  params.validate();
  if (n_contact < 0 || n_contact > 4)
    throw Error(ErrorCode::InvalidArgument, "n_contact must be in [0, 4]");
  const double err = tracking_error(tracked, planned);
  return std::exp(-params.beta * err) + std::exp(-1.0 / (n_contact + params.epsilon));
}

}  // namespace dxs
