#include "harness.hpp"

#include <nlohmann/json.hpp>

#include "obs.hpp"
#include "render.hpp"
#include "reward.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace dxs {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* baseline_mode_name(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::Vlm: return "vlm";
    case BaselineMode::OracleKeypoints: return "oracle-keypoints";
    case BaselineMode::OracleTrajectory: return "oracle-trajectory";
    case BaselineMode::ReducedN: return "reduced-n";
    case BaselineMode::Prerecorded: return "prerecorded";
  }
  throw Error(ErrorCode::Internal, "unhandled baseline mode");
}

BaselineMode baseline_mode_from_name(const std::string& name) {
  if (name == "vlm") return BaselineMode::Vlm;
  if (name == "oracle-keypoints") return BaselineMode::OracleKeypoints;
  if (name == "oracle-trajectory") return BaselineMode::OracleTrajectory;
  if (name == "reduced-n") return BaselineMode::ReducedN;
  if (name == "prerecorded") return BaselineMode::Prerecorded;
  throw Error(ErrorCode::InvalidArgument, "unknown baseline mode '" + name + "'");
}

const char* failure_category_name(FailureCategory category) {
  switch (category) {
    case FailureCategory::Success: return "success";
    case FailureCategory::KeypointDetectionError: return "keypoint-detection-error";
    case FailureCategory::IncompleteTracking: return "incomplete-tracking";
    case FailureCategory::TrackedButUnsuccessful: return "tracked-but-unsuccessful";
  }
  throw Error(ErrorCode::Internal, "unhandled failure category");
}

void RunConfig::validate() const {
  task_library(task_id);  // throws UnknownTask
  if (train_conditions < 1) throw Error(ErrorCode::InvalidArgument, "train_conditions must be >= 1");
  if (eval_configs < 1) throw Error(ErrorCode::InvalidArgument, "eval_configs must be >= 1");
  if (eval_trials < 1) throw Error(ErrorCode::InvalidArgument, "eval_trials must be >= 1");
  if (waypoint_target < 2) throw Error(ErrorCode::InvalidArgument, "waypoint_target must be >= 2");
  if (reduced_waypoints < 2)
    throw Error(ErrorCode::InvalidArgument, "reduced_waypoints must be >= 2");
  if (rollout_steps < 1) throw Error(ErrorCode::InvalidArgument, "rollout_steps must be >= 1");
  if (num_envs < 1) throw Error(ErrorCode::InvalidArgument, "num_envs must be >= 1");
  if (hidden.empty()) throw Error(ErrorCode::InvalidArgument, "hidden layer list is empty");
  for (int width : hidden)
    if (width < 1) throw Error(ErrorCode::InvalidArgument, "hidden layer width must be >= 1");
  if (randomization.noise_std < 0.0)
    throw Error(ErrorCode::InvalidArgument, "noise_std must be >= 0");
  ppo.validate();
}

void apply_small_profile(RunConfig& run) {
  run.hidden = {128, 128, 128};
  run.num_envs = 64;
}

std::string emit_run_config(const RunConfig& run, int indent) {
  ordered_json j;
  j["task_id"] = run.task_id;
  j["baseline"] = baseline_mode_name(run.baseline);
  j["seed"] = run.seed;
  j["train_conditions"] = run.train_conditions;
  j["eval_configs"] = run.eval_configs;
  j["eval_trials"] = run.eval_trials;
  j["waypoint_target"] = run.waypoint_target;
  j["reduced_waypoints"] = run.reduced_waypoints;
  j["rollout_steps"] = run.rollout_steps;
  j["num_envs"] = run.num_envs;
  j["hidden"] = run.hidden;
  j["out_dir"] = run.out_dir;
  ordered_json backend;
  backend["kind"] = backend_kind_name(run.backend.kind);
  backend["url"] = run.backend.url;
  backend["model"] = run.backend.model;
  backend["credential_env"] = run.backend.credential_env;  // variable name, never the secret
  backend["thinking_budget"] = run.backend.thinking_budget;
  backend["keypoint_temperature"] = run.backend.keypoint_temperature;
  backend["trajectory_temperature"] = run.backend.trajectory_temperature;
  backend["cache_dir"] = run.backend.cache_dir;
  backend["schema_retries"] = run.backend.schema_retries;
  j["backend"] = std::move(backend);
  ordered_json dr;
  dr["randomize_dynamics"] = run.randomization.randomize_dynamics;
  dr["proprio_noise"] = run.randomization.proprio_noise;
  dr["action_noise"] = run.randomization.action_noise;
  dr["noise_std"] = run.randomization.noise_std;
  j["randomization"] = std::move(dr);
  ordered_json ppo;
  ppo["gamma"] = run.ppo.gamma;
  ppo["gae_lambda"] = run.ppo.gae_lambda;
  ppo["clip"] = run.ppo.clip;
  ppo["value_loss_coef"] = run.ppo.value_loss_coef;
  ppo["clipped_value_loss"] = run.ppo.clipped_value_loss;
  ppo["entropy_coef"] = run.ppo.entropy_coef;
  ppo["desired_kl"] = run.ppo.desired_kl;
  ppo["adaptive_lr"] = run.ppo.adaptive_lr;
  ppo["learning_rate"] = run.ppo.learning_rate;
  ppo["lr_min"] = run.ppo.lr_min;
  ppo["lr_max"] = run.ppo.lr_max;
  ppo["epochs"] = run.ppo.epochs;
  ppo["minibatches"] = run.ppo.minibatches;
  ppo["max_grad_norm"] = run.ppo.max_grad_norm;
  ppo["normalize_advantage"] = run.ppo.normalize_advantage;
  ppo["max_iterations"] = run.ppo.max_iterations;
  j["ppo"] = std::move(ppo);
  return j.dump(indent);
}

RunConfig parse_run_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("run config is not valid JSON: ") + e.what());
  }
  RunConfig run;
  try {
    run.task_id = j.value("task_id", run.task_id);
    run.baseline = baseline_mode_from_name(j.value("baseline", baseline_mode_name(run.baseline)));
    run.seed = j.value("seed", run.seed);
    run.train_conditions = j.value("train_conditions", run.train_conditions);
    run.eval_configs = j.value("eval_configs", run.eval_configs);
    run.eval_trials = j.value("eval_trials", run.eval_trials);
    run.waypoint_target = j.value("waypoint_target", run.waypoint_target);
    run.reduced_waypoints = j.value("reduced_waypoints", run.reduced_waypoints);
    run.rollout_steps = j.value("rollout_steps", run.rollout_steps);
    run.num_envs = j.value("num_envs", run.num_envs);
    run.hidden = j.value("hidden", run.hidden);
    run.out_dir = j.value("out_dir", run.out_dir);
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      run.backend.kind = backend_kind_from_name(b.value("kind", backend_kind_name(run.backend.kind)));
      run.backend.url = b.value("url", run.backend.url);
      run.backend.model = b.value("model", run.backend.model);
      run.backend.credential_env = b.value("credential_env", run.backend.credential_env);
      run.backend.thinking_budget = b.value("thinking_budget", run.backend.thinking_budget);
      run.backend.keypoint_temperature =
          b.value("keypoint_temperature", run.backend.keypoint_temperature);
      run.backend.trajectory_temperature =
          b.value("trajectory_temperature", run.backend.trajectory_temperature);
      run.backend.cache_dir = b.value("cache_dir", run.backend.cache_dir);
      run.backend.schema_retries = b.value("schema_retries", run.backend.schema_retries);
    }
    if (j.contains("randomization")) {
      const auto& d = j.at("randomization");
      run.randomization.randomize_dynamics =
          d.value("randomize_dynamics", run.randomization.randomize_dynamics);
      run.randomization.proprio_noise = d.value("proprio_noise", run.randomization.proprio_noise);
      run.randomization.action_noise = d.value("action_noise", run.randomization.action_noise);
      run.randomization.noise_std = d.value("noise_std", run.randomization.noise_std);
    }
    if (j.contains("ppo")) {
      const auto& p = j.at("ppo");
      run.ppo.gamma = p.value("gamma", run.ppo.gamma);
      run.ppo.gae_lambda = p.value("gae_lambda", run.ppo.gae_lambda);
      run.ppo.clip = p.value("clip", run.ppo.clip);
      run.ppo.value_loss_coef = p.value("value_loss_coef", run.ppo.value_loss_coef);
      run.ppo.clipped_value_loss = p.value("clipped_value_loss", run.ppo.clipped_value_loss);
      run.ppo.entropy_coef = p.value("entropy_coef", run.ppo.entropy_coef);
      run.ppo.desired_kl = p.value("desired_kl", run.ppo.desired_kl);
      run.ppo.adaptive_lr = p.value("adaptive_lr", run.ppo.adaptive_lr);
      run.ppo.learning_rate = p.value("learning_rate", run.ppo.learning_rate);
      run.ppo.lr_min = p.value("lr_min", run.ppo.lr_min);
      run.ppo.lr_max = p.value("lr_max", run.ppo.lr_max);
      run.ppo.epochs = p.value("epochs", run.ppo.epochs);
      run.ppo.minibatches = p.value("minibatches", run.ppo.minibatches);
      run.ppo.max_grad_norm = p.value("max_grad_norm", run.ppo.max_grad_norm);
      run.ppo.normalize_advantage = p.value("normalize_advantage", run.ppo.normalize_advantage);
      run.ppo.max_iterations = p.value("max_iterations", run.ppo.max_iterations);
    }
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("run config field has the wrong type: ") + e.what());
  }
  return run;
}

namespace {

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::stringstream body;
  body << in.rdbuf();
  return body.str();
}

// Fixed %g renderings keep every emitted table byte-reproducible.
std::string num10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string num6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void save_run_config(const RunConfig& run, const std::string& path) {
  write_text_file(path, emit_run_config(run) + "\n");
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

FailureCategory classify_episode(bool keypoint_error, bool terminated_early,
                                 bool predicate_success) {
  if (keypoint_error) return FailureCategory::KeypointDetectionError;
  if (predicate_success) return FailureCategory::Success;
  return terminated_early ? FailureCategory::IncompleteTracking
                          : FailureCategory::TrackedButUnsuccessful;
}

bool keypoints_on_objects(const std::vector<Vec3>& detected,
                          const std::vector<SceneObject>& objects, double tolerance) {
  for (const Vec3& point : detected) {
    double best = std::numeric_limits<double>::infinity();
    for (const SceneObject& obj : objects)
      best = std::min(best, std::abs(obj.signed_distance(point)));
    if (best > tolerance) return false;
  }
  return true;
}

int FailureReport::count(FailureCategory category) const {
  int n = 0;
  for (const EpisodeRecord& e : episodes)
    if (e.category == category) ++n;
  return n;
}

double FailureReport::percent(FailureCategory category) const {
  if (episodes.empty()) return 0.0;
  return 100.0 * count(category) / static_cast<double>(episodes.size());
}

double FailureReport::success_rate() const {
  if (episodes.empty()) return 0.0;
  return count(FailureCategory::Success) / static_cast<double>(episodes.size());
}

namespace {

constexpr uint64_t kInitStream = 1001;        // network initialization
constexpr uint64_t kLoopStream = 1002;        // action sampling + minibatch shuffles
constexpr uint64_t kConditionStream = 1003;   // which training condition each episode uses
constexpr uint64_t kTrainNoiseStream = 2000;  // + env index
constexpr uint64_t kEvalNoiseStream = 3000000;  // + episode * 64 + trial

// Body-state prefix of the observation vector that receives sensor noise:
// joint positions, velocities, smoothed action, fingertip poses.
constexpr int kProprioDims =
    3 * HandModel::kDof + 7 * HandModel::kFingers;

// Normalized observations are clamped before they reach the network: running
// moments start from a handful of near-constant samples, so a dimension that
// later comes alive (a keypoint leaving its resting pose) would otherwise be
// scaled by a near-zero std into values that dwarf every other input.
constexpr double kNormalizedObsClip = 10.0;

MatX clamp_normalized(MatX obs) {
  return obs.cwiseMax(-kNormalizedObsClip).cwiseMin(kNormalizedObsClip);
}

EnvOptions env_options_for(const RunConfig& run) {
  EnvOptions options;
  options.randomize_dynamics = run.randomization.randomize_dynamics;
  options.action_noise_std =
      run.randomization.action_noise ? run.randomization.noise_std : 0.0;
  return options;
}

std::vector<Vec3> ground_truth_keypoints(const TaskSpec& spec,
                                         const std::vector<SceneObject>& objects) {
  std::vector<Vec3> out;
  out.reserve(spec.keypoint_names.size());
  for (const std::string& name : spec.keypoint_names) {
    const SceneObject* holder = nullptr;
    for (const SceneObject& obj : objects)
      if (obj.has_anchor(name)) {
        holder = &obj;
        break;
      }
    if (!holder)
      throw Error(ErrorCode::Internal, "no scene object carries keypoint '" + name + "'");
    out.push_back(holder->anchor_world(name));
  }
  return out;
}

std::vector<DetectedKeypoint> as_detections(const std::vector<std::string>& names,
                                            const std::vector<Vec3>& positions) {
  std::vector<DetectedKeypoint> out(positions.size());
  for (size_t i = 0; i < positions.size(); ++i) {
    out[i].name = names[i];
    out[i].position = positions[i];
  }
  return out;
}

struct PlannedCondition {
  WaypointSequence waypoints;
  PlanSource source = PlanSource::Oracle;
};

// One planning round for the scene currently loaded in `env`, following the
// run's baseline. `examples` is the few-shot context pool (empty outside the
// few-shot loop).
PlannedCondition plan_condition(const PlannerBackend& backend, const RunConfig& run,
                                const Env& env, const std::vector<WaypointSequence>& examples) {
  const TaskSpec& spec = env.spec();
  const int target = run.baseline == BaselineMode::ReducedN ? run.reduced_waypoints
                                                            : run.waypoint_target;
  PlannedCondition out;
  if (run.baseline == BaselineMode::OracleTrajectory) {
    const std::vector<Vec3> keypoints = ground_truth_keypoints(spec, env.state().objects);
    out.waypoints = oracle_plan(spec.id, keypoints, env.initial_wrist().position, target);
    out.source = PlanSource::Oracle;
    return out;
  }

  PlannerRequest req;
  req.prompt = task_prompt(spec.id);
  req.initial_wrist = env.initial_wrist();
  req.waypoint_target = target;
  // The rendered scene feeds both keypoint grounding and the request
  // fingerprint; the scripted baselines above never need it.
  const CameraSnapshot snap =
      render_scene(default_task_camera(), env.state().objects, spec.keypoint_names);
  req.image = snap.image;
  req.camera = snap.camera;
  req = refine_fewshot(examples, req);

  if (run.baseline == BaselineMode::OracleKeypoints) {
    const std::vector<Vec3> keypoints = ground_truth_keypoints(spec, env.state().objects);
    out.waypoints = generate_waypoints(backend, req,
                                       as_detections(req.prompt.keypoint_names, keypoints));
  } else {
    // Vlm; also ReducedN (same pipeline at the reduced count) and Prerecorded
    // at training time (the reuse happens at evaluation).
    out.waypoints = plan_task(backend, req);
  }
  out.source = run.baseline == BaselineMode::ReducedN
                   ? PlanSource::Reduced
                   : (backend.config().kind == BackendKind::Oracle ? PlanSource::Oracle
                                                                   : PlanSource::Vlm);
  return out;
}

std::string condition_bundle_path(const std::string& out_dir, int condition) {
  char name[32];
  std::snprintf(name, sizeof(name), "condition_%04d.json", condition);
  return (fs::path(out_dir) / "plans" / name).string();
}

// Detected initial keypoint positions are waypoint 0 of every named track
// (the planner anchors them there).
std::vector<Vec3> detected_from_sequence(const WaypointSequence& seq,
                                         const std::vector<std::string>& names) {
  std::vector<Vec3> out;
  out.reserve(names.size());
  for (const std::string& name : names)
    out.push_back(seq.points[static_cast<size_t>(seq.track_index(name))][0]);
  return out;
}

VecX observe(const Env& env, const KeypointPlan& plan, int t, bool proprio_noise,
             double noise_std, Rng& rng) {
  VecX obs = assemble_observation(env.state(), plan, t, env.spec().reference_euler);
  if (proprio_noise && noise_std > 0.0)
    for (int d = 0; d < kProprioDims; ++d) obs[d] += rng.normal(0.0, noise_std);
  return obs;
}

struct RolloutOutcome {
  bool terminated_early = false;
  int steps = 0;
  double reward_sum = 0.0;
  double final_tracking_error = 0.0;
};

// One frozen-policy episode with mean actions and the fully annealed
// termination threshold. The environment must be freshly reset.
RolloutOutcome rollout_mean_policy(Env& env, const KeypointPlan& plan, ActorCritic& net,
                                   const RunningStats& stats, const RunConfig& run,
                                   double delta, Rng& noise_rng) {
  RolloutOutcome out;
  const RewardParams reward_params;
  for (int t = 0; t < plan.horizon; ++t) {
    const VecX obs = observe(env, plan, t, run.randomization.proprio_noise,
                             run.randomization.noise_std, noise_rng);
    const MatX normalized = clamp_normalized(stats.normalize(obs.transpose()));
    const MatX mean = net.action_mean(normalized);
    const VecX action = mean.row(0).transpose();
    const StepResult result = env.step(action, plan.wrist[static_cast<size_t>(t)]);
    std::vector<Vec3> planned(plan.keypoints.size());
    for (size_t i = 0; i < plan.keypoints.size(); ++i)
      planned[i] = plan.keypoints[i][static_cast<size_t>(t)];
    const double reward = keypoint_reward(result.keypoints, planned, result.contacts,
                                          reward_params);
    const bool failed = should_terminate(result.keypoints, planned, delta);
    env.annotate_trace(reward, failed);
    out.reward_sum += reward;
    out.steps = t + 1;
    out.final_tracking_error = tracking_error(result.keypoints, planned);
    if (failed) {
      out.terminated_early = true;
      break;
    }
  }
  return out;
}

void write_failures_csv(const std::string& path, const FailureReport& report) {
  std::ostringstream csv;
  csv << "# dxs failures v1\n";
  csv << "category,count,percent\n";
  const FailureCategory order[] = {
      FailureCategory::Success,
      FailureCategory::KeypointDetectionError,
      FailureCategory::IncompleteTracking,
      FailureCategory::TrackedButUnsuccessful,
  };
  for (FailureCategory category : order)
    csv << failure_category_name(category) << ',' << report.count(category) << ','
        << num10(report.percent(category)) << '\n';
  write_text_file(path, csv.str());
}

}  // namespace

TrainResult train(const RunConfig& run) {
  run.validate();
  if (run.out_dir.empty())
    throw Error(ErrorCode::InvalidArgument, "training needs an output directory");
  const auto wall_start = std::chrono::steady_clock::now();
  const TaskSpec spec = task_library(run.task_id);
  fs::create_directories(fs::path(run.out_dir) / "plans");
  save_run_config(run, (fs::path(run.out_dir) / "run_config.json").string());

  const PlannerBackend backend(run.backend);
  const EnvOptions options = env_options_for(run);
  const Aabb workspace = task_workspace(run.task_id);
  const auto rigid_pairs = task_rigid_pairs(run.task_id);

  // One plan per training condition; a hard validation failure earns a single
  // regeneration, after which the condition is dropped from the sampling set.
  Env plan_env(spec, options, run.seed, 0);
  std::vector<int> included;
  std::vector<KeypointPlan> plans;
  TrainResult result;
  std::vector<std::string> exclusion_log;
  for (int c = 0; c < run.train_conditions; ++c) {
    plan_env.reset(static_cast<uint64_t>(c));
    std::optional<PlannedCondition> accepted;
    std::string last_problem;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      try {
        PlannedCondition planned = plan_condition(backend, run, plan_env, {});
        const KeypointPlan interpolated = interpolate(planned.waypoints, spec.horizon);
        const auto violations = validate_plan(interpolated, workspace, rigid_pairs);
        if (violations.empty()) {
          accepted = std::move(planned);
        } else {
          last_problem = violations.front().message;
        }
      } catch (const Error& e) {
        last_problem = e.what();
      }
    }
    if (!accepted) {
      result.excluded_conditions.push_back(c);
      exclusion_log.push_back("condition " + std::to_string(c) + ": " + last_problem);
      continue;
    }
    PlanBundle bundle;
    bundle.task_id = run.task_id;
    bundle.camera_snapshot_id = "episode-" + std::to_string(c);
    bundle.waypoints = accepted->waypoints;
    bundle.horizon = spec.horizon;
    bundle.source = accepted->source;
    save_plan_bundle(bundle, condition_bundle_path(run.out_dir, c));
    included.push_back(c);
    plans.push_back(interpolate(accepted->waypoints, spec.horizon));
  }
  if (included.empty())
    throw Error(ErrorCode::PlanInvalid, "every training condition failed plan validation");

  // Learner and rollout workers. All environments share stream 0 so that
  // reset(condition) reproduces exactly the scene its plan was made for.
  const int k = spec.keypoint_count();
  const int obs_dim = observation_dim(k);
  const int act_dim = HandModel::kWristDof + spec.finger_arity;
  Rng init_rng(run.seed, kInitStream);
  ActorCritic net(obs_dim, act_dim, run.hidden, init_rng);
  RunningStats stats(obs_dim);
  PpoOptimizer optimizer;
  optimizer.lr = run.ppo.learning_rate;
  Rng loop_rng(run.seed, kLoopStream);
  Rng condition_rng(run.seed, kConditionStream);

  result.checkpoint_path = (fs::path(run.out_dir) / "checkpoint_best.bin").string();
  result.final_checkpoint_path = (fs::path(run.out_dir) / "checkpoint_final.bin").string();
  result.metrics_path = (fs::path(run.out_dir) / "metrics.csv").string();
  const uint64_t config_hash = run.ppo.hash();
  save_checkpoint(result.checkpoint_path, net, stats, run.hidden, 0, optimizer.lr, config_hash);
  save_checkpoint(result.final_checkpoint_path, net, stats, run.hidden, 0, optimizer.lr,
                  config_hash);

  const int n_envs = run.num_envs;
  std::vector<Env> envs;
  envs.reserve(static_cast<size_t>(n_envs));
  std::vector<int> plan_of(static_cast<size_t>(n_envs));  // index into `plans`
  std::vector<int> step_of(static_cast<size_t>(n_envs), 0);
  std::vector<Rng> obs_noise;
  obs_noise.reserve(static_cast<size_t>(n_envs));
  ordered_json env_draws = ordered_json::array();
  for (int e = 0; e < n_envs; ++e) {
    envs.emplace_back(spec, options, run.seed, 0);
    const int pick = static_cast<int>(condition_rng.uniform_index(included.size()));
    plan_of[static_cast<size_t>(e)] = pick;
    envs.back().reset(static_cast<uint64_t>(included[static_cast<size_t>(pick)]));
    obs_noise.emplace_back(run.seed, kTrainNoiseStream + static_cast<uint64_t>(e));
    ordered_json draw;
    draw["env"] = e;
    draw["condition"] = included[static_cast<size_t>(pick)];
    draw["dynamics_multiplier"] = envs.back().dynamics_multiplier();
    env_draws.push_back(std::move(draw));
  }

  std::ofstream metrics(result.metrics_path, std::ios::binary);
  if (!metrics) throw Error(ErrorCode::Io, "cannot open '" + result.metrics_path + "'");
  metrics << "iteration,mean_reward,success_rate,kl,lr,tracking_error\n";

  const RewardParams reward_params;
  double best_success = -1.0;
  double success_rate = 0.0;
  for (int iter = 0; iter < run.ppo.max_iterations; ++iter) {
    const double progress = static_cast<double>(iter) / run.ppo.max_iterations;
    const double delta = anneal(spec.delta_init, progress);
    RolloutBuffer buffer(run.rollout_steps, n_envs, obs_dim, act_dim);
    buffer.old_std = net.stddev();  // state independent, frozen for the rollout
    int episodes_done = 0;
    int episodes_won = 0;
    double tracking_sum = 0.0;

    for (int step = 0; step < run.rollout_steps; ++step) {
      MatX obs_raw(n_envs, obs_dim);
      for (int e = 0; e < n_envs; ++e)
        obs_raw.row(e) = observe(envs[static_cast<size_t>(e)],
                                 plans[static_cast<size_t>(plan_of[static_cast<size_t>(e)])],
                                 step_of[static_cast<size_t>(e)],
                                 run.randomization.proprio_noise, run.randomization.noise_std,
                                 obs_noise[static_cast<size_t>(e)])
                             .transpose();
      stats.update(obs_raw);
      const MatX obs_n = clamp_normalized(stats.normalize(obs_raw));
      const MatX mean = net.action_mean(obs_n);
      const MatX actions = net.sample_actions(mean, loop_rng);
      const VecX log_probs = net.log_prob(mean, actions);
      const VecX values = net.state_value(obs_n);

      VecX rewards(n_envs);
      std::vector<uint8_t> dones(static_cast<size_t>(n_envs), 0);
      std::vector<TerminationCause> causes(static_cast<size_t>(n_envs),
                                           TerminationCause::None);
      for (int e = 0; e < n_envs; ++e) {
        Env& env = envs[static_cast<size_t>(e)];
        const KeypointPlan& plan = plans[static_cast<size_t>(plan_of[static_cast<size_t>(e)])];
        int& t = step_of[static_cast<size_t>(e)];
        const StepResult stepped =
            env.step(actions.row(e).transpose(), plan.wrist[static_cast<size_t>(t)]);
        std::vector<Vec3> planned(plan.keypoints.size());
        for (size_t i = 0; i < plan.keypoints.size(); ++i)
          planned[i] = plan.keypoints[i][static_cast<size_t>(t)];
        rewards[e] = keypoint_reward(stepped.keypoints, planned, stepped.contacts,
                                     reward_params);
        tracking_sum += tracking_error(stepped.keypoints, planned);
        const bool failed = should_terminate(stepped.keypoints, planned, delta);
        env.annotate_trace(rewards[e], failed);
        ++t;
        const bool timeout = !failed && t >= plan.horizon;
        if (failed || timeout) {
          dones[static_cast<size_t>(e)] = 1;
          causes[static_cast<size_t>(e)] =
              failed ? TerminationCause::Failure : TerminationCause::Timeout;
          ++episodes_done;
          if (env.episode_success()) ++episodes_won;
          const int pick = static_cast<int>(condition_rng.uniform_index(included.size()));
          plan_of[static_cast<size_t>(e)] = pick;
          env.reset(static_cast<uint64_t>(included[static_cast<size_t>(pick)]));
          t = 0;
        }
      }
      buffer.put_step(step, obs_n, actions, mean, log_probs, values, rewards, dones, causes);
    }

    MatX obs_tail(n_envs, obs_dim);
    for (int e = 0; e < n_envs; ++e)
      obs_tail.row(e) = observe(envs[static_cast<size_t>(e)],
                                plans[static_cast<size_t>(plan_of[static_cast<size_t>(e)])],
                                step_of[static_cast<size_t>(e)],
                                run.randomization.proprio_noise, run.randomization.noise_std,
                                obs_noise[static_cast<size_t>(e)])
                            .transpose();
    buffer.bootstrap_values = net.state_value(clamp_normalized(stats.normalize(obs_tail)));
    compute_gae(buffer, run.ppo);

    if (episodes_done > 0)
      success_rate = static_cast<double>(episodes_won) / episodes_done;
    // The checkpoint captures the parameters that produced this rollout, so it
    // is written before the update consumes the buffer.
    if (success_rate > best_success) {
      best_success = success_rate;
      save_checkpoint(result.checkpoint_path, net, stats, run.hidden, iter + 1, optimizer.lr,
                      config_hash);
    }
    const PpoMetrics update = ppo_update(net, buffer, run.ppo, optimizer, loop_rng);
    const double mean_reward = buffer.rewards.mean();
    const double mean_tracking = tracking_sum / (static_cast<double>(run.rollout_steps) * n_envs);
    metrics << iter + 1 << ',' << num10(mean_reward) << ',' << num10(success_rate) << ','
            << num10(update.kl) << ',' << num10(update.lr) << ',' << num10(mean_tracking)
            << '\n';
    metrics.flush();
    result.iterations = iter + 1;
  }
  save_checkpoint(result.final_checkpoint_path, net, stats, run.hidden, result.iterations,
                  optimizer.lr, config_hash);
  result.best_success = std::max(best_success, 0.0);
  result.final_success = success_rate;

  const double wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  ordered_json meta;
  meta["config"] = ordered_json::parse(emit_run_config(run));
  meta["iterations"] = result.iterations;
  meta["best_success"] = result.best_success;
  meta["final_success"] = result.final_success;
  meta["included_conditions"] = static_cast<int>(included.size());
  meta["excluded_conditions"] = result.excluded_conditions;
  meta["exclusion_log"] = exclusion_log;
  meta["initial_env_draws"] = std::move(env_draws);
  meta["wall_clock_seconds"] = wall_seconds;
  write_text_file((fs::path(run.out_dir) / "run_meta.json").string(), meta.dump(2) + "\n");
  return result;
}

EvalResult evaluate(const std::string& checkpoint_path, const RunConfig& run) {
  run.validate();
  if (run.out_dir.empty())
    throw Error(ErrorCode::InvalidArgument, "evaluation needs an output directory");
  fs::create_directories(run.out_dir);
  const TaskSpec spec = task_library(run.task_id);
  const int k = spec.keypoint_count();
  const int obs_dim = observation_dim(k);
  const int act_dim = HandModel::kWristDof + spec.finger_arity;

  const CheckpointData data = load_checkpoint(checkpoint_path);
  if (data.obs_dim != obs_dim || data.act_dim != act_dim)
    throw Error(ErrorCode::DimensionMismatch,
                "checkpoint was trained for a different observation/action shape");
  Rng rebuild_rng(0, 0);
  ActorCritic net(obs_dim, act_dim, data.hidden, rebuild_rng);
  RunningStats stats(obs_dim);
  apply_checkpoint(data, net, stats);

  const PlannerBackend backend(run.backend);
  const EnvOptions options = env_options_for(run);
  Env env(spec, options, run.seed, 0);
  const double delta = anneal(spec.delta_init, 1.0);

  // Prerecorded evaluation cycles through whatever plan bundles training kept.
  std::vector<std::string> recorded;
  if (run.baseline == BaselineMode::Prerecorded) {
    const fs::path plans_dir = fs::path(run.out_dir) / "plans";
    if (fs::is_directory(plans_dir))
      for (const auto& entry : fs::directory_iterator(plans_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
          recorded.push_back(entry.path().string());
    std::sort(recorded.begin(), recorded.end());
    if (recorded.empty())
      throw Error(ErrorCode::PlanInvalid,
                  "prerecorded baseline has no plan bundles under " + plans_dir.string());
  }

  EvalResult result;
  std::ostringstream lines;
  for (int c = 0; c < run.eval_configs; ++c) {
    const uint64_t episode = static_cast<uint64_t>(run.train_conditions + c);
    env.reset(episode);
    WaypointSequence seq;
    PlanSource source;
    if (run.baseline == BaselineMode::Prerecorded) {
      const PlanBundle bundle =
          load_plan_bundle(recorded[static_cast<size_t>(c) % recorded.size()]);
      seq = bundle.waypoints;
      source = PlanSource::Prerecorded;
    } else {
      PlannedCondition planned = plan_condition(backend, run, env, {});
      seq = std::move(planned.waypoints);
      source = planned.source;
    }
    const KeypointPlan plan = interpolate(seq, spec.horizon);
    const bool keypoint_error = !keypoints_on_objects(
        detected_from_sequence(seq, spec.keypoint_names), env.state().objects);

    for (int trial = 0; trial < run.eval_trials; ++trial) {
      if (trial > 0) env.reset(episode);
      Rng noise_rng(run.seed, kEvalNoiseStream + episode * 64 + static_cast<uint64_t>(trial));
      const RolloutOutcome rolled =
          rollout_mean_policy(env, plan, net, stats, run, delta, noise_rng);
      EpisodeRecord record;
      record.configuration = c;
      record.trial = trial;
      record.terminated_early = rolled.terminated_early;
      record.predicate_success = env.episode_success();
      record.category =
          classify_episode(keypoint_error, record.terminated_early, record.predicate_success);
      record.steps = rolled.steps;
      record.mean_reward = rolled.steps > 0 ? rolled.reward_sum / rolled.steps : 0.0;
      record.final_tracking_error = rolled.final_tracking_error;
      record.dynamics_multiplier = env.dynamics_multiplier();
      record.plan_source = source;
      result.report.episodes.push_back(record);

      ordered_json line;
      line["configuration"] = record.configuration;
      line["trial"] = record.trial;
      line["category"] = failure_category_name(record.category);
      line["terminated_early"] = record.terminated_early;
      line["predicate_success"] = record.predicate_success;
      line["steps"] = record.steps;
      line["mean_reward"] = record.mean_reward;
      line["final_tracking_error"] = record.final_tracking_error;
      line["dynamics_multiplier"] = record.dynamics_multiplier;
      line["plan_source"] = plan_source_name(record.plan_source);
      lines << line.dump() << '\n';
    }
  }

  result.success_rate = result.report.success_rate();
  result.episodes_path = (fs::path(run.out_dir) / "eval_episodes.jsonl").string();
  result.failures_path = (fs::path(run.out_dir) / "failures.csv").string();
  write_text_file(result.episodes_path, lines.str());
  write_failures_csv(result.failures_path, result.report);
  return result;
}

std::vector<AblationRow> ablate_waypoints(const RunConfig& run, const std::vector<int>& n_list) {
  run.validate();
  if (run.out_dir.empty())
    throw Error(ErrorCode::InvalidArgument, "ablation needs an output directory");
  if (n_list.empty()) throw Error(ErrorCode::InvalidArgument, "ablation list is empty");
  for (int n : n_list)
    if (n < 3)
      throw Error(ErrorCode::InvalidArgument,
                  "waypoint ablation needs n >= 3; a 2-point sequence is a single segment");

  std::vector<AblationRow> rows;
  for (int n : n_list) {
    RunConfig sub = run;
    sub.waypoint_target = n;
    sub.out_dir = (fs::path(run.out_dir) / ("waypoints_" + std::to_string(n))).string();
    const TrainResult trained = train(sub);
    const EvalResult evaluated = evaluate(trained.checkpoint_path, sub);
    rows.push_back({n, evaluated.success_rate});
  }

  std::ostringstream csv;
  csv << "# dxs ablation v1\n";
  csv << "waypoints,success_rate\n";
  for (const AblationRow& row : rows)
    csv << row.waypoints << ',' << num10(row.success_rate) << '\n';
  fs::create_directories(run.out_dir);
  write_text_file((fs::path(run.out_dir) / "ablation.csv").string(), csv.str());
  return rows;
}

std::vector<FewshotRound> fewshot_loop(const RunConfig& run, const FewshotOptions& options) {
  run.validate();
  if (run.out_dir.empty())
    throw Error(ErrorCode::InvalidArgument, "the few-shot loop needs an output directory");
  if (options.rounds < 1) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 1");
  if (options.max_examples < 1)
    throw Error(ErrorCode::InvalidArgument, "max_examples must be >= 1");
  const int deployments =
      options.deployments_per_round > 0 ? options.deployments_per_round : run.eval_configs;

  const TaskSpec spec = task_library(run.task_id);
  const PlannerBackend backend(run.backend);
  const EnvOptions env_opts = env_options_for(run);
  Env env(spec, env_opts, run.seed, 0);
  const Aabb workspace = task_workspace(run.task_id);
  const auto rigid_pairs = task_rigid_pairs(run.task_id);
  const double delta = anneal(spec.delta_init, 1.0);

  std::optional<ActorCritic> net;
  RunningStats stats(observation_dim(spec.keypoint_count()));
  if (!options.checkpoint_path.empty()) {
    const CheckpointData data = load_checkpoint(options.checkpoint_path);
    Rng rebuild_rng(0, 0);
    net.emplace(data.obs_dim, data.act_dim, data.hidden, rebuild_rng);
    apply_checkpoint(data, *net, stats);
  }

  std::vector<FewshotRound> rounds;
  std::vector<WaypointSequence> pool;
  for (int round = 0; round < options.rounds; ++round) {
    // The pool is frozen for the whole round; successes join it afterwards,
    // in deployment order, so the context stays chronological.
    std::vector<WaypointSequence> context(
        pool.end() - std::min<size_t>(pool.size(), static_cast<size_t>(options.max_examples)),
        pool.end());
    std::vector<WaypointSequence> successes;
    int wins = 0;
    for (int c = 0; c < deployments; ++c) {
      const uint64_t episode = static_cast<uint64_t>(run.train_conditions + c);
      env.reset(episode);
      PlannedCondition planned = plan_condition(backend, run, env, context);
      bool ok;
      if (net) {
        const KeypointPlan plan = interpolate(planned.waypoints, spec.horizon);
        Rng noise_rng(run.seed, kEvalNoiseStream + episode * 64 + 63 - static_cast<uint64_t>(round));
        rollout_mean_policy(env, plan, *net, stats, run, delta, noise_rng);
        ok = env.episode_success();
      } else {
        const KeypointPlan plan = interpolate(planned.waypoints, spec.horizon);
        ok = validate_plan(plan, workspace, rigid_pairs).empty();
      }
      if (ok) {
        ++wins;
        successes.push_back(std::move(planned.waypoints));
      }
    }
    rounds.push_back({round, static_cast<double>(wins) / deployments,
                      static_cast<int>(context.size())});
    for (WaypointSequence& s : successes) pool.push_back(std::move(s));
  }

  std::ostringstream csv;
  csv << "# dxs fewshot v1\n";
  csv << "round,success_rate,pool_size\n";
  for (const FewshotRound& row : rounds)
    csv << row.round << ',' << num10(row.success_rate) << ',' << row.pool_size << '\n';
  fs::create_directories(run.out_dir);
  write_text_file((fs::path(run.out_dir) / "fewshot.csv").string(), csv.str());
  return rounds;
}

namespace {

std::vector<std::string> csv_data_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  bool past_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!past_header) {  // column header
      past_header = true;
      continue;
    }
    rows.push_back(line);
  }
  return rows;
}

std::vector<std::string> split_csv_row(const std::string& row) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(row);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

// Method identity of one run directory: its path relative to the report root,
// with any trailing seed suffix stripped so seeds aggregate.
std::string method_key(const std::string& relative) {
  std::string name = relative.empty() ? "." : relative;
  const size_t sep = name.find_last_of("_-");
  if (sep != std::string::npos && sep + 5 <= name.size() &&
      name.compare(sep + 1, 4, "seed") == 0) {
    const std::string tail = name.substr(sep + 5);
    if (!tail.empty() && std::all_of(tail.begin(), tail.end(),
                                     [](unsigned char ch) { return std::isdigit(ch); }))
      name = name.substr(0, sep);
  }
  return name.empty() ? "." : name;
}

struct RunArtifacts {
  std::string method;
  std::vector<int> failure_counts;  // per FailureCategory, when failures.csv exists
  int episodes = 0;
  bool has_failures = false;
  double final_success = 0.0;  // from metrics.csv
  int iterations = 0;
  bool has_metrics = false;
  std::vector<std::pair<int, double>> ablation;       // (waypoints, success)
  std::vector<std::array<double, 3>> fewshot;         // (round, success, pool)
};

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

// Standard error of the mean across seeds; a single run reports 0.
double stderr_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0)) /
         std::sqrt(static_cast<double>(xs.size()));
}

std::string svg_bar_chart(const std::vector<std::string>& labels,
                          const std::vector<double>& values,
                          const std::vector<double>& errors) {
  const int bar_height = 22;
  const int gap = 10;
  const int left = 220;
  const int scale = 360;
  const int width = left + scale + 80;
  const int height = 40 + static_cast<int>(labels.size()) * (bar_height + gap);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg << "<text x=\"" << left << "\" y=\"20\" font-weight=\"bold\">Success rate</text>\n";
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = 36 + static_cast<int>(i) * (bar_height + gap);
    const double v = std::clamp(values[i], 0.0, 1.0);
    const int w = static_cast<int>(std::lround(v * scale));
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y + bar_height - 6
        << "\" text-anchor=\"end\">" << labels[i] << "</text>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << bar_height << "\" fill=\"#4878a8\"/>\n";
    if (errors[i] > 0.0) {
      const int e = static_cast<int>(std::lround(std::min(errors[i], 1.0) * scale));
      const int cy = y + bar_height / 2;
      svg << "<line x1=\"" << left + std::max(w - e, 0) << "\" y1=\"" << cy << "\" x2=\""
          << left + std::min(w + e, scale) << "\" y2=\"" << cy
          << "\" stroke=\"#202020\" stroke-width=\"2\"/>\n";
    }
    svg << "<text x=\"" << left + w + 6 << "\" y=\"" << y + bar_height - 6 << "\">"
        << num6(100.0 * values[i]) << "%</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

void report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir))
    throw Error(ErrorCode::MissingMetrics, "'" + run_dir + "' is not a directory");
  const fs::path root(run_dir);

  // Every directory under the root holding run outputs becomes one entry;
  // previously generated reports are not re-ingested.
  std::vector<fs::path> candidates{root};
  for (fs::recursive_directory_iterator it(root), end; it != end; ++it) {
    if (!it->is_directory()) continue;
    if (it->path().filename() == "report") {
      it.disable_recursion_pending();
      continue;
    }
    candidates.push_back(it->path());
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<RunArtifacts> runs;
  for (const fs::path& dir : candidates) {
    RunArtifacts art;
    art.method = method_key(fs::relative(dir, root).generic_string());
    const fs::path failures = dir / "failures.csv";
    if (fs::is_regular_file(failures)) {
      art.failure_counts.assign(kFailureCategoryCount, 0);
      for (const std::string& row : csv_data_rows(read_text_file(failures.string()))) {
        const auto fields = split_csv_row(row);
        if (fields.size() < 3) continue;
        for (int cat = 0; cat < kFailureCategoryCount; ++cat)
          if (fields[0] == failure_category_name(static_cast<FailureCategory>(cat)))
            art.failure_counts[static_cast<size_t>(cat)] = std::stoi(fields[1]);
      }
      for (int n : art.failure_counts) art.episodes += n;
      art.has_failures = art.episodes > 0;
    }
    const fs::path metrics = dir / "metrics.csv";
    if (fs::is_regular_file(metrics)) {
      const auto rows = csv_data_rows(read_text_file(metrics.string()));
      if (!rows.empty()) {
        const auto fields = split_csv_row(rows.back());
        if (fields.size() >= 3) {
          art.iterations = std::stoi(fields[0]);
          art.final_success = std::stod(fields[2]);
          art.has_metrics = true;
        }
      }
    }
    const fs::path ablation = dir / "ablation.csv";
    if (fs::is_regular_file(ablation))
      for (const std::string& row : csv_data_rows(read_text_file(ablation.string()))) {
        const auto fields = split_csv_row(row);
        if (fields.size() >= 2)
          art.ablation.push_back({std::stoi(fields[0]), std::stod(fields[1])});
      }
    const fs::path fewshot = dir / "fewshot.csv";
    if (fs::is_regular_file(fewshot))
      for (const std::string& row : csv_data_rows(read_text_file(fewshot.string()))) {
        const auto fields = split_csv_row(row);
        if (fields.size() >= 3)
          art.fewshot.push_back(
              {std::stod(fields[0]), std::stod(fields[1]), std::stod(fields[2])});
      }
    if (art.has_failures || art.has_metrics || !art.ablation.empty() || !art.fewshot.empty())
      runs.push_back(std::move(art));
  }
  if (runs.empty())
    throw Error(ErrorCode::MissingMetrics, "no run outputs found under '" + run_dir + "'");

  const fs::path out = root / "report";
  fs::create_directories(out);

  // Success-rate table per method (seed groups aggregated with standard
  // error), plus the flow table behind the failure decomposition.
  std::map<std::string, std::vector<const RunArtifacts*>> groups;
  for (const RunArtifacts& run : runs) groups[run.method].push_back(&run);

  std::ostringstream summary;
  summary << "# dxs report v1\n";
  summary << "method,runs,episodes,success_mean,success_stderr,pct_success,"
             "pct_keypoint_detection_error,pct_incomplete_tracking,"
             "pct_tracked_but_unsuccessful\n";
  std::ostringstream sankey;
  sankey << "# dxs sankey v1\n";
  sankey << "method,source,target,count\n";
  std::vector<std::string> chart_labels;
  std::vector<double> chart_values;
  std::vector<double> chart_errors;
  bool any_failures = false;
  for (const auto& [method, members] : groups) {
    std::vector<double> success;
    std::vector<std::vector<double>> pct(kFailureCategoryCount);
    std::vector<int> totals(kFailureCategoryCount, 0);
    int episodes = 0;
    for (const RunArtifacts* member : members) {
      if (!member->has_failures) continue;
      success.push_back(member->failure_counts[0] /
                        static_cast<double>(member->episodes));
      for (int cat = 0; cat < kFailureCategoryCount; ++cat) {
        pct[static_cast<size_t>(cat)].push_back(
            100.0 * member->failure_counts[static_cast<size_t>(cat)] / member->episodes);
        totals[static_cast<size_t>(cat)] += member->failure_counts[static_cast<size_t>(cat)];
      }
      episodes += member->episodes;
    }
    if (success.empty()) continue;
    any_failures = true;
    summary << method << ',' << success.size() << ',' << episodes << ','
            << num6(mean_of(success)) << ',' << num6(stderr_of(success));
    for (int cat = 0; cat < kFailureCategoryCount; ++cat)
      summary << ',' << num6(mean_of(pct[static_cast<size_t>(cat)]));
    summary << '\n';
    const int failures_total = totals[1] + totals[2] + totals[3];
    sankey << method << ",episodes,success," << totals[0] << '\n';
    sankey << method << ",episodes,failure," << failures_total << '\n';
    for (int cat = 1; cat < kFailureCategoryCount; ++cat)
      sankey << method << ",failure,"
             << failure_category_name(static_cast<FailureCategory>(cat)) << ','
             << totals[static_cast<size_t>(cat)] << '\n';
    chart_labels.push_back(method);
    chart_values.push_back(mean_of(success));
    chart_errors.push_back(stderr_of(success));
  }
  if (any_failures) {
    write_text_file((out / "summary.csv").string(), summary.str());
    write_text_file((out / "sankey.csv").string(), sankey.str());
    write_text_file((out / "success.svg").string(),
                    svg_bar_chart(chart_labels, chart_values, chart_errors));
  }

  std::ostringstream training;
  training << "# dxs training v1\n";
  training << "method,runs,iterations_mean,final_success_mean,final_success_stderr\n";
  bool any_training = false;
  for (const auto& [method, members] : groups) {
    std::vector<double> finals;
    std::vector<double> iters;
    for (const RunArtifacts* member : members)
      if (member->has_metrics) {
        finals.push_back(member->final_success);
        iters.push_back(member->iterations);
      }
    if (finals.empty()) continue;
    any_training = true;
    training << method << ',' << finals.size() << ',' << num6(mean_of(iters)) << ','
             << num6(mean_of(finals)) << ',' << num6(stderr_of(finals)) << '\n';
  }
  if (any_training) write_text_file((out / "training.csv").string(), training.str());

  std::ostringstream ablation;
  ablation << "# dxs ablation-report v1\n";
  ablation << "method,waypoints,runs,success_mean,success_stderr\n";
  bool any_ablation = false;
  for (const auto& [method, members] : groups) {
    std::map<int, std::vector<double>> by_n;
    for (const RunArtifacts* member : members)
      for (const auto& [n, rate] : member->ablation) by_n[n].push_back(rate);
    for (const auto& [n, rates] : by_n) {
      any_ablation = true;
      ablation << method << ',' << n << ',' << rates.size() << ',' << num6(mean_of(rates))
               << ',' << num6(stderr_of(rates)) << '\n';
    }
  }
  if (any_ablation) write_text_file((out / "ablation.csv").string(), ablation.str());

  std::ostringstream fewshot;
  fewshot << "# dxs fewshot-report v1\n";
  fewshot << "method,round,runs,success_mean,pool_size_mean\n";
  bool any_fewshot = false;
  for (const auto& [method, members] : groups) {
    std::map<int, std::vector<std::pair<double, double>>> by_round;
    for (const RunArtifacts* member : members)
      for (const auto& row : member->fewshot)
        by_round[static_cast<int>(row[0])].push_back({row[1], row[2]});
    for (const auto& [round, rows] : by_round) {
      any_fewshot = true;
      std::vector<double> rates;
      std::vector<double> pools;
      for (const auto& [rate, pool] : rows) {
        rates.push_back(rate);
        pools.push_back(pool);
      }
      fewshot << method << ',' << round << ',' << rows.size() << ',' << num6(mean_of(rates))
              << ',' << num6(mean_of(pools)) << '\n';
    }
  }
  if (any_fewshot) write_text_file((out / "fewshot.csv").string(), fewshot.str());
}

}  // namespace dxs
