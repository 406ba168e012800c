#include "ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dxs {

void PpoConfig::validate() const {
  const bool ok = gamma > 0.0 && gamma <= 1.0 && gae_lambda >= 0.0 && gae_lambda <= 1.0 &&
                  clip > 0.0 && clip < 1.0 && value_loss_coef > 0.0 && entropy_coef >= 0.0 &&
                  desired_kl > 0.0 && learning_rate > 0.0 && lr_min > 0.0 && lr_max >= lr_min &&
                  epochs > 0 && minibatches > 0 && max_grad_norm > 0.0 && max_iterations > 0;
  if (!ok) throw Error(ErrorCode::InvalidArgument, "ppo config out of range");
}

uint64_t PpoConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << gamma << '|' << gae_lambda << '|' << clip << '|' << value_loss_coef << '|'
     << clipped_value_loss << '|' << entropy_coef << '|' << desired_kl << '|' << adaptive_lr
     << '|' << learning_rate << '|' << lr_min << '|' << lr_max << '|' << epochs << '|'
     << minibatches << '|' << max_grad_norm << '|' << normalize_advantage << '|'
     << max_iterations;
  return fnv1a64(os.str());
}

RolloutBuffer::RolloutBuffer(int steps_in, int envs_in, int obs_dim, int act_dim)
    : steps(steps_in), envs(envs_in) {
  if (steps <= 0 || envs <= 0 || obs_dim <= 0 || act_dim <= 0) {
    throw Error(ErrorCode::InvalidArgument, "rollout buffer dimensions must be positive");
  }
  const int n = steps * envs;
  obs.setZero(n, obs_dim);
  actions.setZero(n, act_dim);
  old_mean.setZero(n, act_dim);
  old_std = VecX::Ones(act_dim);
  log_probs.setZero(n);
  values.setZero(n);
  rewards.setZero(n);
  dones.assign(n, 0);
  causes.assign(n, TerminationCause::None);
  bootstrap_values.setZero(envs);
  advantages.setZero(n);
  returns.setZero(n);
}

void RolloutBuffer::put_step(int t, const MatX& obs_batch, const MatX& action_batch,
                             const MatX& mean_batch, const VecX& logp_batch,
                             const VecX& value_batch, const VecX& reward_batch,
                             const std::vector<uint8_t>& done_batch,
                             const std::vector<TerminationCause>& cause_batch) {
  if (t < 0 || t >= steps) throw Error(ErrorCode::OutOfRange, "rollout step index out of range");
  if (obs_batch.rows() != envs || action_batch.rows() != envs || mean_batch.rows() != envs ||
      logp_batch.size() != envs || value_batch.size() != envs || reward_batch.size() != envs ||
      static_cast<int>(done_batch.size()) != envs ||
      static_cast<int>(cause_batch.size()) != envs) {
    throw Error(ErrorCode::DimensionMismatch, "rollout step batch size mismatch");
  }
  const int base = flat(t, 0);
  obs.middleRows(base, envs) = obs_batch;
  actions.middleRows(base, envs) = action_batch;
  old_mean.middleRows(base, envs) = mean_batch;
  log_probs.segment(base, envs) = logp_batch;
  values.segment(base, envs) = value_batch;
  rewards.segment(base, envs) = reward_batch;
  for (int e = 0; e < envs; ++e) {
    dones[base + e] = done_batch[e];
    causes[base + e] = cause_batch[e];
  }
}

std::pair<MatX, MatX> gae(const MatX& rewards, const MatX& values, const MatX& dones,
                          double gamma, double lambda) {
  const Eigen::Index t_len = rewards.rows();
  const Eigen::Index n = rewards.cols();
  if (values.rows() != t_len + 1 || values.cols() != n || dones.rows() != t_len ||
      dones.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "gae input shapes misaligned");
  }
  MatX advantages(t_len, n);
  MatX last = MatX::Zero(1, n);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    for (Eigen::Index e = 0; e < n; ++e) {
      const double not_done = 1.0 - dones(t, e);
      const double delta =
          rewards(t, e) + gamma * values(t + 1, e) * not_done - values(t, e);
      last(0, e) = delta + gamma * lambda * not_done * last(0, e);
      advantages(t, e) = last(0, e);
    }
  }
  const MatX returns = advantages + values.topRows(t_len);
  return {advantages, returns};
}

void compute_gae(RolloutBuffer& buffer, const PpoConfig& config) {
  const int t_len = buffer.steps;
  const int n = buffer.envs;
  MatX rewards(t_len, n);
  MatX values(t_len + 1, n);
  MatX dones(t_len, n);
  for (int t = 0; t < t_len; ++t) {
    for (int e = 0; e < n; ++e) {
      const int i = buffer.flat(t, e);
      double r = buffer.rewards[i];
      // A time-limit truncation is not a real terminal: keep the tail value.
      if (buffer.causes[i] == TerminationCause::Timeout) {
        r += config.gamma * buffer.values[i];
      }
      rewards(t, e) = r;
      values(t, e) = buffer.values[i];
      dones(t, e) = buffer.dones[i] != 0 ? 1.0 : 0.0;
    }
  }
  values.row(t_len) = buffer.bootstrap_values.transpose();
  const auto [adv, ret] = gae(rewards, values, dones, config.gamma, config.gae_lambda);
  for (int t = 0; t < t_len; ++t) {
    for (int e = 0; e < n; ++e) {
      buffer.advantages[buffer.flat(t, e)] = adv(t, e);
      buffer.returns[buffer.flat(t, e)] = ret(t, e);
    }
  }
}

namespace {

MatX gather_rows(const MatX& m, const std::vector<int>& idx) {
  MatX out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  return out;
}

VecX gather(const VecX& v, const std::vector<int>& idx) {
  VecX out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[idx[r]];
  return out;
}

std::vector<MatX> snapshot_params(ActorCritic& net) {
  std::vector<MatX> out;
  for (Param* p : net.params()) out.push_back(p->value);
  return out;
}

void restore_params(ActorCritic& net, const std::vector<MatX>& snapshot) {
  const std::vector<Param*> params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

}  // namespace

VecX normalize_advantages(const VecX& advantages) {
  const Eigen::Index n = advantages.size();
  if (n < 2) return advantages;
  const double mean = advantages.mean();
  const double var = (advantages.array() - mean).square().sum() / static_cast<double>(n);
  return (advantages.array() - mean) / (std::sqrt(var) + 1e-8);
}

PpoLossParts ppo_minibatch_loss(ActorCritic& net, const MinibatchData& mb,
                                const PpoConfig& config, bool accumulate_grads) {
  const int mb_size = static_cast<int>(mb.obs.rows());
  if (mb_size == 0 || mb.actions.rows() != mb_size || mb.old_mean.rows() != mb_size ||
      mb.old_logp.size() != mb_size || mb.old_values.size() != mb_size ||
      mb.returns.size() != mb_size || mb.advantages.size() != mb_size ||
      mb.old_std.size() != net.act_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "minibatch fields misaligned");
  }
  const double eps = config.clip;

  const MatX mean = net.actor.forward(mb.obs, accumulate_grads);
  const VecX value = net.critic.forward(mb.obs, accumulate_grads).col(0);
  const VecX sigma = net.stddev();
  const VecX new_logp = net.log_prob(mean, mb.actions);

  PpoLossParts parts;
  MatX d_mean = MatX::Zero(mb_size, net.act_dim());
  MatX d_value = MatX::Zero(mb_size, 1);
  VecX d_logstd = VecX::Zero(net.act_dim());

  for (int r = 0; r < mb_size; ++r) {
    // Closed-form Gaussian KL(old || new), used by the adaptive LR schedule.
    for (int c = 0; c < net.act_dim(); ++c) {
      const double so = mb.old_std[c];
      const double sn = sigma[c];
      const double dm = mb.old_mean(r, c) - mean(r, c);
      parts.kl += std::log(sn / so) + (so * so + dm * dm) / (2.0 * sn * sn) - 0.5;
    }

    const double ratio = std::exp(new_logp[r] - mb.old_logp[r]);
    const double adv = mb.advantages[r];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    parts.policy += -std::min(unclipped, clipped);
    if (std::abs(ratio - 1.0) > eps) parts.clip_fraction += 1.0;
    if (unclipped <= clipped) {
      const double g = -unclipped / mb_size;  // d loss / d new_logp
      for (int c = 0; c < net.act_dim(); ++c) {
        const double z = (mb.actions(r, c) - mean(r, c)) / sigma[c];
        d_mean(r, c) += g * (mb.actions(r, c) - mean(r, c)) / (sigma[c] * sigma[c]);
        d_logstd[c] += g * (z * z - 1.0);
      }
    }  // else the clipped branch is active and flat in the new policy

    const double v = value[r];
    const double target = mb.returns[r];
    if (config.clipped_value_loss) {
      const double v_clip = mb.old_values[r] + std::clamp(v - mb.old_values[r], -eps, eps);
      const double lu = (v - target) * (v - target);
      const double lc = (v_clip - target) * (v_clip - target);
      parts.value += std::max(lu, lc);
      if (lu >= lc) {
        d_value(r, 0) = config.value_loss_coef * 2.0 * (v - target) / mb_size;
      }  // else the clipped branch is active and flat in v
    } else {
      parts.value += (v - target) * (v - target);
      d_value(r, 0) = config.value_loss_coef * 2.0 * (v - target) / mb_size;
    }
  }
  parts.kl /= mb_size;
  parts.policy /= mb_size;
  parts.value /= mb_size;
  parts.clip_fraction /= mb_size;
  parts.entropy = net.entropy();
  parts.total =
      parts.policy + config.value_loss_coef * parts.value - config.entropy_coef * parts.entropy;
  if (!std::isfinite(parts.total) || !std::isfinite(parts.kl)) {
    throw Error(ErrorCode::NonFinite, "ppo loss overflowed");
  }

  if (accumulate_grads) {
    d_logstd.array() -= config.entropy_coef;  // d(-c * entropy)/d log_std
    net.actor.backward(d_mean);
    net.critic.backward(d_value);
    net.log_std.grad.row(0) += d_logstd.transpose();
  }
  return parts;
}

PpoMetrics ppo_update(ActorCritic& net, RolloutBuffer& buffer, const PpoConfig& config,
                      PpoOptimizer& opt, Rng& rng) {
  config.validate();
  compute_gae(buffer, config);

  const int total = buffer.size();
  if (total % config.minibatches != 0) {
    throw Error(ErrorCode::InvalidArgument, "buffer size not divisible into minibatches");
  }
  const int mb_size = total / config.minibatches;

  const std::vector<MatX> snapshot = snapshot_params(net);
  PpoMetrics metrics;
  int batches_done = 0;

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);

  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      // Deterministic Fisher-Yates reshuffle each epoch.
      for (int i = total - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
      }
      for (int mb = 0; mb < config.minibatches; ++mb) {
        const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(mb) * mb_size,
                                   order.begin() + static_cast<std::ptrdiff_t>(mb + 1) * mb_size);
        MinibatchData data;
        data.obs = gather_rows(buffer.obs, idx);
        data.actions = gather_rows(buffer.actions, idx);
        data.old_mean = gather_rows(buffer.old_mean, idx);
        data.old_std = buffer.old_std;
        data.old_logp = gather(buffer.log_probs, idx);
        data.old_values = gather(buffer.values, idx);
        data.returns = gather(buffer.returns, idx);
        data.advantages = gather(buffer.advantages, idx);
        if (config.normalize_advantage) data.advantages = normalize_advantages(data.advantages);

        net.zero_grads();
        const PpoLossParts parts = ppo_minibatch_loss(net, data, config, true);

        // The adaptive-KL schedule moves the LR before this minibatch's step.
        if (config.adaptive_lr) {
          if (parts.kl > 2.0 * config.desired_kl) {
            opt.lr = std::max(config.lr_min, opt.lr * 0.5);
          } else if (parts.kl < 0.5 * config.desired_kl && parts.kl >= 0.0) {
            opt.lr = std::min(config.lr_max, opt.lr * 1.5);
          }
        }

        const std::vector<Param*> params = net.params();
        const double norm = clip_grad_norm(params, config.max_grad_norm);
        if (!std::isfinite(norm)) throw Error(ErrorCode::NonFinite, "gradient overflowed");
        opt.adam.step(params, opt.lr);

        metrics.policy_loss += parts.policy;
        metrics.value_loss += parts.value;
        metrics.entropy += parts.entropy;
        metrics.kl += parts.kl;
        metrics.clip_fraction += parts.clip_fraction;
        metrics.grad_norm += norm;
        ++batches_done;
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFinite) {
      restore_params(net, snapshot);
    }
    throw;
  }

  const double inv = 1.0 / std::max(1, batches_done);
  metrics.policy_loss *= inv;
  metrics.value_loss *= inv;
  metrics.entropy *= inv;
  metrics.kl *= inv;
  metrics.clip_fraction *= inv;
  metrics.grad_norm *= inv;
  metrics.lr = opt.lr;
  return metrics;
}

namespace {
constexpr char kCheckpointMagic[9] = "DXSCKPT1";

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::Io, "truncated checkpoint");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, ActorCritic& net, const RunningStats& stats,
                     const std::vector<int>& hidden, int64_t iteration, double lr,
                     uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 8);
  write_pod(out, config_hash);
  write_pod<int64_t>(out, net.obs_dim());
  write_pod<int64_t>(out, net.act_dim());
  write_pod<int64_t>(out, static_cast<int64_t>(hidden.size()));
  for (int h : hidden) write_pod<int64_t>(out, h);
  write_pod(out, iteration);
  write_pod(out, lr);
  const std::vector<Param*> params = net.params();
  write_pod<int64_t>(out, static_cast<int64_t>(params.size()));
  for (const Param* p : params) write_matrix(out, p->value);
  write_matrix(out, stats.mean().transpose());
  write_matrix(out, stats.m2().transpose());
  write_pod(out, stats.count());
  if (!out) throw Error(ErrorCode::Io, "checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint: " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
    throw Error(ErrorCode::Schema, "not a checkpoint file: " + path);
  }
  CheckpointData data;
  data.config_hash = read_pod<uint64_t>(in);
  data.obs_dim = static_cast<int>(read_pod<int64_t>(in));
  data.act_dim = static_cast<int>(read_pod<int64_t>(in));
  const int64_t layers = read_pod<int64_t>(in);
  if (layers < 0 || layers > 64) throw Error(ErrorCode::Schema, "corrupt checkpoint layer count");
  for (int64_t i = 0; i < layers; ++i) data.hidden.push_back(static_cast<int>(read_pod<int64_t>(in)));
  data.iteration = read_pod<int64_t>(in);
  data.lr = read_pod<double>(in);
  const int64_t n_params = read_pod<int64_t>(in);
  if (n_params < 0 || n_params > 1024) throw Error(ErrorCode::Schema, "corrupt checkpoint parameter count");
  for (int64_t i = 0; i < n_params; ++i) data.params.push_back(read_matrix(in));
  data.stats_mean = read_matrix(in).row(0).transpose();
  data.stats_m2 = read_matrix(in).row(0).transpose();
  data.stats_count = read_pod<double>(in);
  return data;
}

void apply_checkpoint(const CheckpointData& data, ActorCritic& net, RunningStats& stats) {
  const std::vector<Param*> params = net.params();
  if (params.size() != data.params.size()) {
    throw Error(ErrorCode::DimensionMismatch, "checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != data.params[i].rows() ||
        params[i]->value.cols() != data.params[i].cols()) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint parameter shape mismatch");
    }
    params[i]->value = data.params[i];
    params[i]->zero_grad();
  }
  stats.restore(data.stats_mean, data.stats_m2, data.stats_count);
}

}  // namespace dxs
