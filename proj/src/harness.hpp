#pragma once

#include "env.hpp"
#include "plan.hpp"
#include "planner.hpp"
#include "policy.hpp"
#include "ppo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dxs {

// Evaluation conditions. `Vlm` runs the configured backend for both planning
// stages; `OracleKeypoints` feeds ground-truth keypoints into the backend's
// trajectory stage; `OracleTrajectory` scripts the whole plan; `ReducedN`
// plans with `reduced_waypoints` instead of the full count; `Prerecorded`
// reuses the training plans verbatim on fresh evaluation scenes.
enum class BaselineMode { Vlm, OracleKeypoints, OracleTrajectory, ReducedN, Prerecorded };
const char* baseline_mode_name(BaselineMode mode);
BaselineMode baseline_mode_from_name(const std::string& name);

// Sim-to-real robustness knobs. The dynamics multiplier is drawn once per
// episode from U(0.3, 3.0) inside the environment; both noises are per-step
// N(0, noise_std^2), one on the body-state observation blocks and one on the
// smoothed command driving the controller.
struct DomainRandomization {
  bool randomize_dynamics = true;
  bool proprio_noise = true;
  bool action_noise = true;
  double noise_std = 0.05;
};

// Everything one pipeline run needs: the task, how plans are produced, the
// training/evaluation episode budget, and the learner shape. Serialized next
// to the run outputs so results stay reproducible from the directory alone.
struct RunConfig {
  std::string task_id = "move_apple";
  BackendConfig backend;
  BaselineMode baseline = BaselineMode::Vlm;
  int train_conditions = 100;  // N initial states with one plan each
  int eval_configs = 100;      // fresh configurations at evaluation time
  int eval_trials = 20;        // rollouts per configuration
  uint64_t seed = 0;
  int waypoint_target = 20;    // n
  int reduced_waypoints = 3;   // n under the ReducedN baseline
  DomainRandomization randomization;
  PpoConfig ppo;
  std::vector<int> hidden = {512, 512, 512};
  int rollout_steps = 24;
  int num_envs = 256;
  std::string out_dir;

  void validate() const;
};

// CI-sized profile: narrow network, few environments.
void apply_small_profile(RunConfig& run);

std::string emit_run_config(const RunConfig& run, int indent = 2);
RunConfig parse_run_config(const std::string& text);
void save_run_config(const RunConfig& run, const std::string& path);
RunConfig load_run_config(const std::string& path);

// Per-episode outcome. Exactly one category applies: detected keypoints off
// every object surface take precedence (the plan was grounded wrong); then a
// satisfied success predicate counts even when tracking ended early (the
// record keeps both flags); the remaining failures split on whether the
// episode was cut short by the termination threshold.
enum class FailureCategory : int {
  Success = 0,
  KeypointDetectionError = 1,
  IncompleteTracking = 2,
  TrackedButUnsuccessful = 3,
};
inline constexpr int kFailureCategoryCount = 4;
const char* failure_category_name(FailureCategory category);

FailureCategory classify_episode(bool keypoint_error, bool terminated_early,
                                 bool predicate_success);

// Detected keypoints are plausible when each lies within `tolerance` of some
// object surface of the initial scene (distances are to the surface, so
// interior points count).
bool keypoints_on_objects(const std::vector<Vec3>& detected,
                          const std::vector<SceneObject>& objects, double tolerance = 0.05);

struct EpisodeRecord {
  int configuration = 0;
  int trial = 0;
  FailureCategory category = FailureCategory::Success;
  bool terminated_early = false;
  bool predicate_success = false;
  int steps = 0;
  double mean_reward = 0.0;
  double final_tracking_error = 0.0;
  double dynamics_multiplier = 1.0;
  PlanSource plan_source = PlanSource::Oracle;
};

struct FailureReport {
  std::vector<EpisodeRecord> episodes;

  int count(FailureCategory category) const;
  double percent(FailureCategory category) const;  // of all episodes, 0..100
  double success_rate() const;                     // fraction, 0..1
};

struct TrainResult {
  std::string checkpoint_path;        // highest rollout success seen
  std::string final_checkpoint_path;  // parameters after the last update
  std::string metrics_path;
  int iterations = 0;
  double best_success = 0.0;
  double final_success = 0.0;
  std::vector<int> excluded_conditions;  // plans dropped after one regeneration
};

// Generates and validates one plan per training condition (bundles under
// <out_dir>/plans), then runs the PPO loop with the annealed termination
// curriculum, streaming per-iteration metrics to <out_dir>/metrics.csv.
// Throws PlanInvalid when every condition's plan fails validation.
TrainResult train(const RunConfig& run);

struct EvalResult {
  double success_rate = 0.0;
  FailureReport report;
  std::string episodes_path;  // JSON-lines, one record per episode
  std::string failures_path;  // aggregate category table
};

// Frozen-policy evaluation: one fresh plan per configuration (scenes disjoint
// from the training conditions), `eval_trials` mean-action rollouts each, with
// the fully annealed termination threshold and per-episode failure
// classification. Plans are deployed unvalidated; grounding mistakes surface
// as keypoint-detection-error episodes.
EvalResult evaluate(const std::string& checkpoint_path, const RunConfig& run);

struct AblationRow {
  int waypoints = 0;
  double success_rate = 0.0;
};

// One full train+eval cycle per waypoint count, in the given order, written to
// <out_dir>/ablation.csv. Counts below 3 are rejected: a 2-point sequence is a
// single straight segment with no task structure left to ablate.
std::vector<AblationRow> ablate_waypoints(const RunConfig& run,
                                          const std::vector<int>& n_list = {3, 5, 10, 20, 40});

struct FewshotRound {
  int round = 0;
  double success_rate = 0.0;
  int pool_size = 0;  // in-context examples available to this round
};

struct FewshotOptions {
  int rounds = 3;
  int max_examples = 3;  // m most recent successes offered as context
  // Judge for one deployment: with a checkpoint, one mean-action rollout must
  // succeed; without one, the plan must pass the validator cleanly (the cheap
  // stand-in used with replay corpora).
  std::string checkpoint_path;
  int deployments_per_round = 0;  // 0: use run.eval_configs
};

// Iterative in-context refinement: each round plans every deployment scene
// with the current example pool, judges the outcomes, and appends the
// successful plans (chronologically) to the pool for the next round. Round 0
// always runs zero-shot. Results land in <out_dir>/fewshot.csv.
std::vector<FewshotRound> fewshot_loop(const RunConfig& run, const FewshotOptions& options = {});

// Collects every run output found under `run_dir` (metrics, failure tables,
// ablations, few-shot logs; the `report` subdirectory itself is skipped) into
// versioned CSV tables plus a success-rate chart under <run_dir>/report.
// Directories whose names differ only by a `_seed<k>` suffix are aggregated
// into one method row with mean and standard error. Throws MissingMetrics
// when there is nothing to report.
void report(const std::string& run_dir);

}  // namespace dxs
