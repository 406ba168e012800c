#include "policy.hpp"

#include <cmath>

namespace dxs {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
}

ActorCritic::ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden, Rng& rng)
    : actor(obs_dim, hidden, act_dim, 0.01, rng), critic(obs_dim, hidden, 1, 1.0, rng) {
  log_std.value = MatX::Zero(1, act_dim);  // std = exp(0) = 1
  log_std.zero_grad();
}

MatX ActorCritic::sample_actions(const MatX& mean, Rng& rng) const {
  const VecX sigma = stddev();
  MatX actions(mean.rows(), mean.cols());
  for (Eigen::Index r = 0; r < mean.rows(); ++r) {
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
      actions(r, c) = mean(r, c) + sigma[c] * rng.normal();
    }
  }
  return actions;
}

VecX ActorCritic::log_prob(const MatX& mean, const MatX& actions) const {
  if (mean.rows() != actions.rows() || mean.cols() != actions.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "log_prob mean/action shape mismatch");
  }
  const VecX sigma = stddev();
  VecX lp = VecX::Zero(mean.rows());
  for (Eigen::Index r = 0; r < mean.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
      const double z = (actions(r, c) - mean(r, c)) / sigma[c];
      acc += -0.5 * (z * z + kLog2Pi) - log_std.value(0, c);
    }
    lp[r] = acc;
  }
  return lp;
}

double ActorCritic::entropy() const {
  return log_std.value.sum() + 0.5 * act_dim() * (kLog2Pi + 1.0);
}

std::vector<Param*> ActorCritic::params() {
  std::vector<Param*> out = actor.params();
  const std::vector<Param*> c = critic.params();
  out.insert(out.end(), c.begin(), c.end());
  out.push_back(&log_std);
  return out;
}

void ActorCritic::zero_grads() {
  for (Param* p : params()) p->zero_grad();
}

RunningStats::RunningStats(int dim) : mean_(VecX::Zero(dim)), m2_(VecX::Zero(dim)) {}

void RunningStats::update(const MatX& batch) {
  if (batch.cols() != mean_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "normalization batch width mismatch");
  }
  const double n = static_cast<double>(batch.rows());
  if (n == 0.0) return;
  const VecX batch_mean = batch.colwise().mean();
  VecX batch_m2 = VecX::Zero(mean_.size());
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const VecX d = batch.row(r).transpose() - batch_mean;
    batch_m2 += d.cwiseProduct(d);
  }
  if (count_ == 0.0) {
    mean_ = batch_mean;
    m2_ = batch_m2;
    count_ = n;
    return;
  }
  const VecX delta = batch_mean - mean_;
  const double total = count_ + n;
  mean_ += delta * (n / total);
  m2_ += batch_m2 + delta.cwiseProduct(delta) * (count_ * n / total);
  count_ = total;
}

VecX RunningStats::stddev() const {
  if (count_ < 2.0) return VecX::Ones(mean_.size());
  return (m2_ / count_).cwiseMax(0.0).cwiseSqrt();
}

MatX RunningStats::normalize(const MatX& batch) const {
  if (batch.cols() != mean_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "normalization batch width mismatch");
  }
  const VecX scale = stddev().cwiseMax(1e-8).cwiseInverse();
  return (batch.rowwise() - mean_.transpose()).array().rowwise() * scale.transpose().array();
}

void RunningStats::restore(VecX mean, VecX m2, double count) {
  if (mean.size() != mean_.size() || m2.size() != m2_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "restored stats dimension mismatch");
  }
  mean_ = std::move(mean);
  m2_ = std::move(m2);
  count_ = count;
}

}  // namespace dxs
