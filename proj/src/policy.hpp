#pragma once

#include "common.hpp"
#include "nn.hpp"
#include "rng.hpp"

#include <vector>

namespace dxs {

// Diagonal-Gaussian actor with a state-independent log-std per action
// dimension (initialized so std = 1), plus a scalar critic.
class ActorCritic {
 public:
  ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden, Rng& rng);

  int obs_dim() const { return actor.input_dim(); }
  int act_dim() const { return actor.output_dim(); }

  // Rollout path (no caches kept).
  MatX action_mean(const MatX& obs) { return actor.forward(obs, false); }
  VecX state_value(const MatX& obs) { return critic.forward(obs, false).col(0); }

  VecX stddev() const { return log_std.value.row(0).array().exp(); }

  MatX sample_actions(const MatX& mean, Rng& rng) const;
  VecX log_prob(const MatX& mean, const MatX& actions) const;
  // Entropy is state independent: sum_d (log sigma_d + 0.5 log(2 pi e)).
  double entropy() const;

  std::vector<Param*> params();
  void zero_grads();

  Mlp actor;
  Mlp critic;
  Param log_std;  // 1 x act_dim
};

// Per-dimension running mean/variance (parallel Welford merge) used for
// empirical observation normalization. Moments move only while update() is
// called, so evaluation freezes them by simply not updating.
class RunningStats {
 public:
  explicit RunningStats(int dim);

  void update(const MatX& batch);
  MatX normalize(const MatX& batch) const;  // (x - mean) / max(std, 1e-8)

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const VecX& mean() const { return mean_; }
  VecX stddev() const;

  // Checkpoint plumbing.
  void restore(VecX mean, VecX m2, double count);
  const VecX& m2() const { return m2_; }

 private:
  VecX mean_;
  VecX m2_;  // sum of squared deviations
  double count_ = 0.0;
};

}  // namespace dxs
