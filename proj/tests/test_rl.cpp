#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "policy.hpp"
#include "ppo.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

using namespace dxs;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;  // max relative error

MatX random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  MatX m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  }
  return m;
}

// Central finite differences of loss() against the analytic gradients already
// accumulated in params; returns the worst relative error.
double max_grad_error(const std::vector<Param*>& params, const std::function<double()>& loss) {
  double worst = 0.0;
  for (Param* p : params) {
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + kFdStep;
        const double up = loss();
        p->value(r, c) = saved - kFdStep;
        const double down = loss();
        p->value(r, c) = saved;
        const double fd = (up - down) / (2.0 * kFdStep);
        const double g = p->grad(r, c);
        const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

// Brute-force GAE: explicit discounted double sum, trace cut at episode ends.
MatX gae_oracle(const MatX& rewards, const MatX& values, const MatX& dones, double gamma,
                double lambda) {
  const Eigen::Index t_len = rewards.rows();
  const Eigen::Index n = rewards.cols();
  MatX adv(t_len, n);
  for (Eigen::Index e = 0; e < n; ++e) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double acc = 0.0;
      double coef = 1.0;
      for (Eigen::Index l = t; l < t_len; ++l) {
        const double not_done = 1.0 - dones(l, e);
        const double delta =
            rewards(l, e) + gamma * values(l + 1, e) * not_done - values(l, e);
        acc += coef * delta;
        if (dones(l, e) != 0.0) break;
        coef *= gamma * lambda;
      }
      adv(t, e) = acc;
    }
  }
  return adv;
}

}  // namespace

TEST_CASE("orthogonal init produces gain-scaled orthonormal frames") {
  Rng rng(11, 0);
  MatX tall(16, 8);
  orthogonal_init(tall, std::sqrt(2.0), rng);
  CHECK(((tall.transpose() * tall) - 2.0 * MatX::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-9);

  MatX wide(8, 16);
  orthogonal_init(wide, 1.0, rng);
  CHECK(((wide * wide.transpose()) - MatX::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zero-weight network outputs zero mean and bias value") {
  Rng rng(11, 1);
  ActorCritic net(4, 3, {8, 8}, rng);
  for (Param* p : net.params()) p->value.setZero();
  net.critic.params().back()->value(0, 0) = 3.25;  // critic head bias

  const MatX obs = random_matrix(rng, 5, 4);
  CHECK(net.action_mean(obs).cwiseAbs().maxCoeff() == 0.0);
  const VecX v = net.state_value(obs);
  for (int r = 0; r < 5; ++r) CHECK(v[r] == doctest::Approx(3.25));
}

TEST_CASE("linear and elu layers pass finite-difference checks") {
  Rng rng(11, 2);
  Mlp mlp(6, {9, 7}, 3, 1.0, rng);  // two hidden ELU layers plus linear head
  const MatX input = random_matrix(rng, 5, 6);
  const MatX loss_weights = random_matrix(rng, 5, 3);

  for (Param* p : mlp.params()) p->zero_grad();
  mlp.forward(input, true);
  mlp.backward(loss_weights);  // loss = sum_ij w_ij * out_ij

  const auto loss = [&] { return (mlp.forward(input, false).array() * loss_weights.array()).sum(); };
  CHECK(max_grad_error(mlp.params(), loss) < kFdTol);
}

TEST_CASE("elu is smooth across zero and matches its derivative form") {
  MatX x(1, 4);
  x << -2.0, -1e-9, 1e-9, 2.0;
  const MatX y = elu(x);
  CHECK(y(0, 0) == doctest::Approx(std::expm1(-2.0)));
  CHECK(y(0, 3) == doctest::Approx(2.0));
  // derivative from output: y+1 on the negative side, 1 on the positive side
  const MatX dy = elu_backward(MatX::Ones(1, 4), y);
  CHECK(dy(0, 0) == doctest::Approx(std::exp(-2.0)));
  CHECK(dy(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(dy(0, 2) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(dy(0, 3) == doctest::Approx(1.0));
}

TEST_CASE("gaussian log-prob gradient w.r.t. mean is (a - mu) / sigma^2") {
  Rng rng(11, 3);
  ActorCritic net(4, 3, {8}, rng);
  net.log_std.value << -0.3, 0.1, 0.4;
  const MatX mean = random_matrix(rng, 6, 3);
  const MatX actions = random_matrix(rng, 6, 3);
  const VecX sigma = net.stddev();

  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 3; ++c) {
      MatX up = mean;
      MatX down = mean;
      up(r, c) += kFdStep;
      down(r, c) -= kFdStep;
      const double fd = (net.log_prob(up, actions).sum() - net.log_prob(down, actions).sum()) /
                        (2.0 * kFdStep);
      const double closed = (actions(r, c) - mean(r, c)) / (sigma[c] * sigma[c]);
      CHECK(fd == doctest::Approx(closed).epsilon(1e-6));
    }
  }
}

TEST_CASE("log-prob and entropy match the gaussian closed forms") {
  Rng rng(11, 4);
  ActorCritic net(2, 2, {4}, rng);
  net.log_std.value << 0.25, -0.5;
  const MatX mean = random_matrix(rng, 3, 2);
  const MatX actions = random_matrix(rng, 3, 2);
  const VecX lp = net.log_prob(mean, actions);
  for (int r = 0; r < 3; ++r) {
    double expected = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double sigma = std::exp(net.log_std.value(0, c));
      const double z = (actions(r, c) - mean(r, c)) / sigma;
      expected += -0.5 * z * z - 0.5 * std::log(2.0 * kPi) - std::log(sigma);
    }
    CHECK(lp[r] == doctest::Approx(expected).epsilon(1e-12));
  }
  const double expected_entropy =
      0.25 + -0.5 + 2.0 * 0.5 * std::log(2.0 * kPi * std::exp(1.0));
  CHECK(net.entropy() == doctest::Approx(expected_entropy).epsilon(1e-12));
}

TEST_CASE("entropy gradient w.r.t. log-std is one") {
  Rng rng(11, 5);
  ActorCritic net(2, 3, {4}, rng);
  net.log_std.value << 0.1, -0.2, 0.3;
  for (int c = 0; c < 3; ++c) {
    const double saved = net.log_std.value(0, c);
    net.log_std.value(0, c) = saved + kFdStep;
    const double up = net.entropy();
    net.log_std.value(0, c) = saved - kFdStep;
    const double down = net.entropy();
    net.log_std.value(0, c) = saved;
    CHECK((up - down) / (2.0 * kFdStep) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("full ppo loss on a tiny network passes finite-difference checks") {
  Rng rng(11, 6);
  ActorCritic net(8, 2, {16, 16}, rng);
  PpoConfig config;
  config.normalize_advantage = false;  // data arrives pre-normalized here

  const int mb_size = 12;
  MinibatchData mb;
  mb.obs = random_matrix(rng, mb_size, 8);
  mb.old_std = (VecX(2) << 1.1, 0.9).finished();
  const MatX mean_now = net.action_mean(mb.obs);
  mb.actions = mean_now + random_matrix(rng, mb_size, 2, 0.5);
  mb.old_mean = mean_now + random_matrix(rng, mb_size, 2, 0.1);
  mb.old_logp = net.log_prob(mean_now, mb.actions);
  // Push every sample a safe margin away from the clip kinks so central
  // differences see a smooth function.
  for (int r = 0; r < mb_size; ++r) mb.old_logp[r] += (r % 2 == 0) ? 0.08 : -0.08;
  const VecX value_now = net.state_value(mb.obs);
  mb.old_values = value_now + 0.4 * VecX::Ones(mb_size);
  mb.returns = value_now + random_matrix(rng, mb_size, 1, 1.0).col(0);
  mb.advantages = random_matrix(rng, mb_size, 1, 1.0).col(0);

  // Verify the margin guards actually hold for this seed.
  {
    const VecX lp = net.log_prob(mean_now, mb.actions);
    for (int r = 0; r < mb_size; ++r) {
      const double ratio = std::exp(lp[r] - mb.old_logp[r]);
      REQUIRE(std::abs(ratio - (1.0 - config.clip)) > 1e-2);
      REQUIRE(std::abs(ratio - (1.0 + config.clip)) > 1e-2);
      const double dv = value_now[r] - mb.old_values[r];
      REQUIRE(std::abs(std::abs(dv) - config.clip) > 1e-2);
      if (std::abs(dv) > config.clip) {
        const double v_clip = mb.old_values[r] + std::clamp(dv, -config.clip, config.clip);
        const double lu = std::pow(value_now[r] - mb.returns[r], 2);
        const double lc = std::pow(v_clip - mb.returns[r], 2);
        REQUIRE(std::abs(lu - lc) > 1e-3);
      }
    }
  }

  net.zero_grads();
  ppo_minibatch_loss(net, mb, config, true);
  const auto loss = [&] { return ppo_minibatch_loss(net, mb, config, false).total; };
  CHECK(max_grad_error(net.params(), loss) < kFdTol);
}

TEST_CASE("clip example: ratio 1.5 with advantage +1 contributes 1.2") {
  Rng rng(11, 7);
  ActorCritic net(3, 2, {4}, rng);
  PpoConfig config;
  config.entropy_coef = 0.0;
  config.normalize_advantage = false;

  MinibatchData mb;
  mb.obs = random_matrix(rng, 1, 3);
  const MatX mean = net.action_mean(mb.obs);
  mb.actions = mean + random_matrix(rng, 1, 2, 0.3);
  mb.old_mean = mean;
  mb.old_std = net.stddev();
  mb.old_logp = net.log_prob(mean, mb.actions);
  mb.old_logp[0] -= std::log(1.5);  // forces ratio exactly 1.5
  const VecX value = net.state_value(mb.obs);
  mb.old_values = value;
  mb.returns = value;  // value loss 0
  mb.advantages = VecX::Ones(1);

  const PpoLossParts parts = ppo_minibatch_loss(net, mb, config, false);
  CHECK(parts.policy == doctest::Approx(-1.2).epsilon(1e-12));
  CHECK(parts.value == doctest::Approx(0.0));
  CHECK(parts.total == doctest::Approx(-1.2).epsilon(1e-12));
  CHECK(parts.clip_fraction == doctest::Approx(1.0));
}

TEST_CASE("identical old and new policies give zero kl and clip fraction") {
  Rng rng(11, 8);
  ActorCritic net(5, 3, {8}, rng);
  PpoConfig config;
  config.normalize_advantage = false;

  const int n = 16;
  MinibatchData mb;
  mb.obs = random_matrix(rng, n, 5);
  const MatX mean = net.action_mean(mb.obs);
  mb.actions = net.sample_actions(mean, rng);
  mb.old_mean = mean;
  mb.old_std = net.stddev();
  mb.old_logp = net.log_prob(mean, mb.actions);
  mb.old_values = net.state_value(mb.obs);
  mb.returns = mb.old_values;
  mb.advantages = random_matrix(rng, n, 1).col(0);

  const PpoLossParts parts = ppo_minibatch_loss(net, mb, config, false);
  CHECK(std::abs(parts.kl) < 1e-12);
  CHECK(parts.clip_fraction == 0.0);
}

TEST_CASE("gae single step reduces to the td error") {
  MatX rewards(1, 1), dones(1, 1), values(2, 1);
  rewards << 0.7;
  dones << 0.0;
  values << 0.3, 1.1;
  const auto [adv, ret] = gae(rewards, values, dones, 0.99, 0.95);
  CHECK(adv(0, 0) == doctest::Approx(0.7 + 0.99 * 1.1 - 0.3).epsilon(1e-15));
  CHECK(ret(0, 0) == doctest::Approx(adv(0, 0) + 0.3).epsilon(1e-15));
}

TEST_CASE("gae with lambda zero is the one-step td advantage everywhere") {
  Rng rng(11, 9);
  const int t_len = 10, n = 3;
  const MatX rewards = random_matrix(rng, t_len, n);
  const MatX values = random_matrix(rng, t_len + 1, n);
  MatX dones = MatX::Zero(t_len, n);
  dones(4, 1) = 1.0;
  const auto [adv, ret] = gae(rewards, values, dones, 0.99, 0.0);
  for (int t = 0; t < t_len; ++t) {
    for (int e = 0; e < n; ++e) {
      const double nd = 1.0 - dones(t, e);
      const double td = rewards(t, e) + 0.99 * values(t + 1, e) * nd - values(t, e);
      CHECK(adv(t, e) == doctest::Approx(td).epsilon(1e-12));
    }
  }
}

TEST_CASE("gae equals the brute-force discounted double sum") {
  Rng rng(11, 10);
  for (int batch = 0; batch < 100; ++batch) {
    const int t_len = 1 + static_cast<int>(rng.uniform_index(24));
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    const MatX rewards = random_matrix(rng, t_len, n);
    const MatX values = random_matrix(rng, t_len + 1, n);
    MatX dones(t_len, n);
    for (int t = 0; t < t_len; ++t) {
      for (int e = 0; e < n; ++e) dones(t, e) = rng.uniform() < 0.15 ? 1.0 : 0.0;
    }
    const double gamma = rng.uniform(0.9, 1.0);
    const double lambda = rng.uniform(0.0, 1.0);
    const auto [adv, ret] = gae(rewards, values, dones, gamma, lambda);
    const MatX expected = gae_oracle(rewards, values, dones, gamma, lambda);
    CHECK((adv - expected).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ret - (expected + values.topRows(t_len))).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("timeout steps are value-bootstrapped before gae") {
  RolloutBuffer buffer(2, 1, 1, 1);
  PpoConfig config;
  buffer.rewards[buffer.flat(0, 0)] = 1.0;
  buffer.rewards[buffer.flat(1, 0)] = 0.5;
  buffer.values[buffer.flat(0, 0)] = 2.0;
  buffer.values[buffer.flat(1, 0)] = 3.0;
  buffer.dones[buffer.flat(0, 0)] = 1;
  buffer.causes[buffer.flat(0, 0)] = TerminationCause::Timeout;
  buffer.bootstrap_values[0] = 4.0;
  compute_gae(buffer, config);
  // Step 0 ends by time limit: reward is augmented by gamma * V(s_0 value),
  // and the done flag still cuts the trace.
  const double r0 = 1.0 + config.gamma * 2.0;
  const double a1 = 0.5 + config.gamma * 4.0 - 3.0;
  const double a0 = r0 - 2.0;
  CHECK(buffer.advantages[buffer.flat(0, 0)] == doctest::Approx(a0).epsilon(1e-12));
  CHECK(buffer.advantages[buffer.flat(1, 0)] == doctest::Approx(a1).epsilon(1e-12));
}

TEST_CASE("normalized advantages have zero mean and unit deviation") {
  Rng rng(11, 11);
  const VecX adv = random_matrix(rng, 64, 1, 5.0).col(0);
  const VecX normed = normalize_advantages(adv);
  CHECK(std::abs(normed.mean()) < 1e-9);
  const double std =
      std::sqrt((normed.array() - normed.mean()).square().sum() / normed.size());
  CHECK(std == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("running stats match a two-pass batch computation") {
  Rng rng(11, 12);
  const int total = 10000, dim = 5;
  MatX all(total, dim);
  for (int r = 0; r < total; ++r) {
    for (int c = 0; c < dim; ++c) all(r, c) = 3.0 + 2.0 * rng.normal() * (c + 1);
  }
  RunningStats stats(dim);
  int offset = 0;
  while (offset < total) {
    const int chunk = std::min<int>(1 + static_cast<int>(rng.uniform_index(512)), total - offset);
    stats.update(all.middleRows(offset, chunk));
    offset += chunk;
  }
  const VecX mean_oracle = all.colwise().mean();
  VecX std_oracle(dim);
  for (int c = 0; c < dim; ++c) {
    std_oracle[c] = std::sqrt((all.col(c).array() - mean_oracle[c]).square().sum() / total);
  }
  for (int c = 0; c < dim; ++c) {
    CHECK(std::abs(stats.mean()[c] - mean_oracle[c]) / std::abs(mean_oracle[c]) < 1e-6);
    CHECK(std::abs(stats.stddev()[c] - std_oracle[c]) / std_oracle[c] < 1e-6);
  }
}

TEST_CASE("constant observation stream normalizes to zeros") {
  RunningStats stats(3);
  const MatX batch = MatX::Constant(50, 3, 7.5);
  stats.update(batch);
  stats.update(batch);
  CHECK(stats.normalize(batch).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("not updating freezes the normalization moments") {
  Rng rng(11, 13);
  RunningStats stats(4);
  stats.update(random_matrix(rng, 100, 4));
  const VecX mean_before = stats.mean();
  const VecX std_before = stats.stddev();
  const MatX eval_batch = random_matrix(rng, 40, 4, 10.0);
  const MatX normalized = stats.normalize(eval_batch);  // no update call
  CHECK((stats.mean() - mean_before).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stats.stddev() - std_before).cwiseAbs().maxCoeff() == 0.0);
  // and the transform used the frozen moments
  const MatX expected = (eval_batch.rowwise() - mean_before.transpose()).array().rowwise() /
                        std_before.cwiseMax(1e-8).transpose().array();
  CHECK((normalized - expected).cwiseAbs().maxCoeff() < 1e-12);
}

namespace {

RolloutBuffer seeded_buffer(ActorCritic& net, Rng& rng, int steps, int envs) {
  RolloutBuffer buffer(steps, envs, net.obs_dim(), net.act_dim());
  buffer.old_std = net.stddev();
  for (int t = 0; t < steps; ++t) {
    const MatX obs = random_matrix(rng, envs, net.obs_dim());
    const MatX mean = net.action_mean(obs);
    const MatX actions = net.sample_actions(mean, rng);
    const VecX logp = net.log_prob(mean, actions);
    const VecX value = net.state_value(obs);
    VecX reward(envs);
    std::vector<uint8_t> done(envs, 0);
    std::vector<TerminationCause> cause(envs, TerminationCause::None);
    for (int e = 0; e < envs; ++e) {
      reward[e] = rng.uniform();
      if (rng.uniform() < 0.1) {
        done[e] = 1;
        cause[e] = TerminationCause::Failure;
      }
    }
    buffer.put_step(t, obs, actions, mean, logp, value, reward, done, cause);
  }
  VecX boot(envs);
  for (int e = 0; e < envs; ++e) boot[e] = rng.uniform();
  buffer.bootstrap_values = boot;
  return buffer;
}

}  // namespace

TEST_CASE("one ppo update on a fixed seeded buffer is bit-reproducible") {
  const auto run = [] {
    Rng init(21, 0);
    ActorCritic net(6, 2, {16, 16}, init);
    Rng collect(21, 1);
    RolloutBuffer buffer = seeded_buffer(net, collect, 8, 8);
    PpoConfig config;
    config.minibatches = 4;
    PpoOptimizer opt;
    opt.lr = config.learning_rate;
    Rng shuffle(21, 2);
    const PpoMetrics metrics = ppo_update(net, buffer, config, opt, shuffle);
    std::vector<MatX> values;
    for (Param* p : net.params()) values.push_back(p->value);
    return std::make_pair(metrics, values);
  };
  const auto [m1, p1] = run();
  const auto [m2, p2] = run();
  CHECK(m1.policy_loss == m2.policy_loss);
  CHECK(m1.value_loss == m2.value_loss);
  CHECK(m1.kl == m2.kl);
  CHECK(m1.lr == m2.lr);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK((p1[i].array() == p2[i].array()).all());
  }
}

TEST_CASE("adaptive kl schedule halves and raises the learning rate") {
  Rng init(21, 3);
  ActorCritic net(4, 2, {8}, init);
  PpoConfig config;
  config.epochs = 1;
  config.minibatches = 1;

  // Old policy far from current -> KL >> 2 * desired -> LR halves.
  {
    Rng collect(21, 4);
    RolloutBuffer buffer = seeded_buffer(net, collect, 4, 4);
    buffer.old_mean.array() += 1.0;
    PpoOptimizer opt;
    opt.lr = 3e-4;
    Rng shuffle(21, 5);
    const PpoMetrics metrics = ppo_update(net, buffer, config, opt, shuffle);
    CHECK(metrics.kl > 2.0 * config.desired_kl);
    CHECK(opt.lr == doctest::Approx(1.5e-4));
  }
  // Old policy equals current -> KL ~ 0 -> LR grows by 1.5x.
  {
    Rng collect(21, 4);
    RolloutBuffer buffer = seeded_buffer(net, collect, 4, 4);
    PpoOptimizer opt;
    opt.lr = 3e-4;
    Rng shuffle(21, 6);
    const PpoMetrics metrics = ppo_update(net, buffer, config, opt, shuffle);
    CHECK(metrics.kl < 0.5 * config.desired_kl);
    CHECK(opt.lr == doctest::Approx(4.5e-4));
  }
  // Bounds hold.
  {
    Rng collect(21, 4);
    RolloutBuffer buffer = seeded_buffer(net, collect, 4, 4);
    buffer.old_mean.array() += 1.0;
    PpoOptimizer opt;
    opt.lr = 1.5e-6;
    Rng shuffle(21, 7);
    ppo_update(net, buffer, config, opt, shuffle);
    CHECK(opt.lr == doctest::Approx(config.lr_min));
  }
}

TEST_CASE("non-finite rewards abort the update and restore parameters") {
  Rng init(21, 8);
  ActorCritic net(4, 2, {8}, init);
  std::vector<MatX> before;
  for (Param* p : net.params()) before.push_back(p->value);

  Rng collect(21, 9);
  RolloutBuffer buffer = seeded_buffer(net, collect, 4, 4);
  buffer.rewards[3] = std::numeric_limits<double>::infinity();
  PpoConfig config;
  config.epochs = 2;
  config.minibatches = 2;
  PpoOptimizer opt;
  Rng shuffle(21, 10);

  bool threw = false;
  try {
    ppo_update(net, buffer, config, opt, shuffle);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::NonFinite);
  }
  CHECK(threw);
  const std::vector<Param*> params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK((params[i]->value.array() == before[i].array()).all());
  }
}

TEST_CASE("overflowing activations raise the non-finite error") {
  Rng rng(21, 11);
  Mlp mlp(2, {4}, 1, 1.0, rng);
  for (Param* p : mlp.params()) p->value.setConstant(1e200);
  const MatX huge = MatX::Constant(1, 2, 1e200);
  CHECK_THROWS_AS(static_cast<void>(mlp.forward(huge, false)), Error);
}

TEST_CASE("adam minimizes a separable quadratic") {
  Param x;
  x.value = (MatX(1, 3) << 5.0, -4.0, 2.0).finished();
  x.zero_grad();
  const MatX target = (MatX(1, 3) << 1.0, 2.0, 3.0).finished();
  Adam adam;
  for (int i = 0; i < 800; ++i) {
    x.grad = 2.0 * (x.value - target);
    adam.step({&x}, 0.05);
  }
  CHECK((x.value - target).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("checkpoints round-trip parameters, stats, and metadata") {
  Rng rng(21, 12);
  ActorCritic net(6, 3, {8, 8}, rng);
  RunningStats stats(6);
  stats.update(random_matrix(rng, 200, 6));
  const std::string path = "checkpoint_roundtrip.bin";
  save_checkpoint(path, net, stats, {8, 8}, 42, 2.5e-4, 0xabcdefull);

  const CheckpointData data = load_checkpoint(path);
  CHECK(data.config_hash == 0xabcdefull);
  CHECK(data.obs_dim == 6);
  CHECK(data.act_dim == 3);
  CHECK(data.hidden == std::vector<int>{8, 8});
  CHECK(data.iteration == 42);
  CHECK(data.lr == doctest::Approx(2.5e-4));

  Rng rng2(99, 0);
  ActorCritic restored(data.obs_dim, data.act_dim, data.hidden, rng2);
  RunningStats restored_stats(data.obs_dim);
  apply_checkpoint(data, restored, restored_stats);

  const MatX probe = random_matrix(rng, 7, 6);
  CHECK((net.action_mean(probe) - restored.action_mean(probe)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((net.state_value(probe) - restored.state_value(probe)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((stats.normalize(probe) - restored_stats.normalize(probe)).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string path = "checkpoint_corrupt.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTACKPT-and-some-garbage-bytes", f);
    std::fclose(f);
  }
  bool threw = false;
  try {
    load_checkpoint(path);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::Schema);
  }
  CHECK(threw);
  CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.bin"), Error);
  std::remove(path.c_str());
}
