#pragma once

#include "common.hpp"
#include "nn.hpp"
#include "policy.hpp"
#include "rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dxs {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double value_loss_coef = 1.0;
  bool clipped_value_loss = true;
  double entropy_coef = 0.01;
  double desired_kl = 0.01;
  bool adaptive_lr = true;
  double learning_rate = 3e-4;  // base LR; the adaptive schedule moves it
  double lr_min = 1e-6;
  double lr_max = 1e-2;
  int epochs = 5;
  int minibatches = 16;
  double max_grad_norm = 1.0;
  bool normalize_advantage = true;  // per minibatch
  int max_iterations = 2000;

  void validate() const;
  uint64_t hash() const;
};

enum class TerminationCause : uint8_t { None = 0, Failure = 1, Timeout = 2 };

// Fixed-shape on-policy storage, steps x envs, flattened row-major by step.
struct RolloutBuffer {
  RolloutBuffer(int steps, int envs, int obs_dim, int act_dim);

  int steps = 0;
  int envs = 0;
  MatX obs;        // (steps*envs) x obs_dim, already normalized
  MatX actions;    // (steps*envs) x act_dim
  MatX old_mean;   // (steps*envs) x act_dim
  VecX old_std;    // act_dim, state independent at collection time
  VecX log_probs;  // steps*envs
  VecX values;
  VecX rewards;
  std::vector<uint8_t> dones;              // episode ended at this step
  std::vector<TerminationCause> causes;    // why it ended
  VecX bootstrap_values;                   // envs, V(s) after the last step
  VecX advantages;
  VecX returns;

  int flat(int t, int e) const { return t * envs + e; }
  int size() const { return steps * envs; }

  // Writes one environment-step row for all envs at time index t.
  void put_step(int t, const MatX& obs_batch, const MatX& action_batch, const MatX& mean_batch,
                const VecX& logp_batch, const VecX& value_batch, const VecX& reward_batch,
                const std::vector<uint8_t>& done_batch,
                const std::vector<TerminationCause>& cause_batch);
};

// Generalized advantage estimation with episode-boundary masking.
// rewards/dones: T x N; values: (T+1) x N including the bootstrap row.
// Returns {advantages, returns} with returns = advantages + values.
std::pair<MatX, MatX> gae(const MatX& rewards, const MatX& values, const MatX& dones,
                          double gamma, double lambda);

// Fills buffer.advantages / buffer.returns. Steps truncated by the time limit
// (TerminationCause::Timeout) are value-bootstrapped before GAE so truncation
// is not treated as a zero-value terminal.
void compute_gae(RolloutBuffer& buffer, const PpoConfig& config);

struct PpoOptimizer {
  Adam adam;
  double lr = 3e-4;
};

// One minibatch of training data in network-input form.
struct MinibatchData {
  MatX obs;
  MatX actions;
  MatX old_mean;
  VecX old_std;
  VecX old_logp;
  VecX old_values;
  VecX returns;
  VecX advantages;  // already normalized if the config asks for it
};

struct PpoLossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;  // closed-form Gaussian KL(old || new), informational
};

// (adv - mean) / (std + 1e-8) over the given slice.
VecX normalize_advantages(const VecX& advantages);

// Scalar PPO loss (clipped surrogate + value term - entropy bonus) on one
// minibatch; optionally accumulates analytic gradients into the network.
// Exposed so gradient checks can difference the exact training objective.
PpoLossParts ppo_minibatch_loss(ActorCritic& net, const MinibatchData& mb,
                                const PpoConfig& config, bool accumulate_grads);

struct PpoMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm
};

// One full PPO update: epochs x minibatches over the shuffled buffer with the
// clipped surrogate, clipped value loss, entropy bonus, per-minibatch
// advantage normalization and adaptive-KL learning-rate schedule. Throws
// NonFinite (with parameters restored) if anything overflows.
PpoMetrics ppo_update(ActorCritic& net, RolloutBuffer& buffer, const PpoConfig& config,
                      PpoOptimizer& opt, Rng& rng);

// Versioned binary checkpoint of parameters, normalization stats, and config
// identity.
struct CheckpointData {
  uint64_t config_hash = 0;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<int> hidden;
  int64_t iteration = 0;
  double lr = 0.0;
  std::vector<MatX> params;
  VecX stats_mean;
  VecX stats_m2;
  double stats_count = 0.0;
};

void save_checkpoint(const std::string& path, ActorCritic& net, const RunningStats& stats,
                     const std::vector<int>& hidden, int64_t iteration, double lr,
                     uint64_t config_hash);
CheckpointData load_checkpoint(const std::string& path);
// Rebuilds the network and stats exactly as checkpointed.
void apply_checkpoint(const CheckpointData& data, ActorCritic& net, RunningStats& stats);

}  // namespace dxs
