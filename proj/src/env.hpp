#pragma once

#include "common.hpp"
#include "control.hpp"
#include "geometry.hpp"
#include "rng.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dxs {

// Floating hand: 6 wrist dummy joints (3 prismatic + 3 revolute) carrying four
// planar 4-joint fingers. Only fingertip poses matter to contacts and
// observations, so each finger is a fixed-length planar chain curling about
// the wrist y-axis toward the palm center.
struct HandModel {
  static constexpr int kWristDof = 6;
  static constexpr int kFingers = 4;
  static constexpr int kJointsPerFinger = 4;
  static constexpr int kFingerDof = kFingers * kJointsPerFinger;
  static constexpr int kDof = kWristDof + kFingerDof;  // 22

  std::array<double, kJointsPerFinger> link_lengths{0.045, 0.035, 0.030, 0.025};
  std::array<Vec3, kFingers> finger_bases;
  std::array<double, kFingers> curl_sign;  // +-1: which way the chain folds
  VecX finger_lower;  // 16
  VecX finger_upper;  // 16

  static HandModel standard();

  // Joint-limit interpolation map for the coarse open/close action; arity 1
  // drives all fingers with one command, arity 4 gives one command per finger.
  FingerCoupling coupling(int arity) const;

  Vec3 fingertip_position(const Pose6& wrist, const VecX& finger_q, int finger) const;
  // Position (3) + orientation quaternion wxyz (4) of the last segment.
  Eigen::Matrix<double, 7, 1> fingertip_pose(const Pose6& wrist, const VecX& finger_q,
                                             int finger) const;
};

enum class ShapeKind { Box, Cylinder, Sphere };

// None: rigid. Prismatic: points translate along `axis` by the scalar.
// Revolute: points rotate about (`pivot`, `axis`) by the scalar. RevoluteSqueeze
// (scissors/pliers): the scalar is the opening angle; points on the positive
// side of `split_normal` (through the pivot) rotate by +value/2, the other
// side by -value/2, and the joint is driven by squeezing, not by wrist motion.
enum class ArticulationKind { None, Prismatic, Revolute, RevoluteSqueeze };

struct Articulation {
  ArticulationKind kind = ArticulationKind::None;
  Vec3 axis = Vec3::UnitX();   // object frame
  Vec3 pivot = Vec3::Zero();   // object frame, revolute kinds only
  Vec3 split_normal = Vec3::UnitY();  // RevoluteSqueeze half-space normal
  double lower = 0.0;
  double upper = 0.0;
};

// Rigid or one-joint articulated primitive with named keypoint anchors.
struct SceneObject {
  std::string id;
  ShapeKind shape = ShapeKind::Box;
  // Box: full extents (x, y, z). Cylinder: x = radius, z = height, axis z.
  // Sphere: x = radius.
  Vec3 dims = Vec3::Ones();
  Pose6 pose;  // base pose; articulation moves points relative to it
  std::map<std::string, Vec3> anchors;  // keypoint name -> object-frame offset
  Articulation articulation;
  double articulation_value = 0.0;
  bool movable = false;     // free rigid body: can be grasped and carried
  bool is_support = false;  // objects may rest on its top face
  bool welded_to_wrist = false;  // permanently attached (toy tracking task)
  Vec3 color = Vec3(0.6, 0.6, 0.6);

  // Articulation transform applied to object-frame points.
  Vec3 articulate(const Vec3& local) const;
  Vec3 point_world(const Vec3& local) const { return pose.apply(articulate(local)); }
  Vec3 anchor_world(const std::string& name) const;
  bool has_anchor(const std::string& name) const { return anchors.count(name) != 0; }

  // World -> canonical shape frame: inverse pose, then inverse articulation.
  // Squeeze joints keep the canonical shape (handles part only a few degrees).
  Vec3 to_shape_frame(const Vec3& world_point) const;
  Vec3 to_shape_frame_vector(const Vec3& world_vector) const;
  // Signed distance from a world point to the (articulated) shape surface.
  double signed_distance(const Vec3& world_point) const;
  double top_height() const;      // world z of the support surface
  double bottom_offset() const;   // origin height above the lowest point
  // Whether (x, y) lies over the support footprint.
  bool footprint_contains(double x, double y) const;
};

// Success predicate parameters; thresholds come from the task definitions.
struct SuccessSpec {
  // pick_place | drawer | fridge | hammer | wipe | close_angle | track
  std::string predicate;
  std::string object_id;
  std::string target_object_id;
  std::string keypoint;      // hammer/wipe: which keypoint track to analyze
  Vec3 target_offset = Vec3::Zero();
  double radius = 0.10;      // pick_place: horizontal tolerance, meters
  double threshold = 0.0;    // displacement / angle / amplitude / path length
  int count = 0;             // hammer: required swings
};

struct PoseRange {
  std::string object_id;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  double yaw_lo = 0.0;
  double yaw_hi = 0.0;
};

struct TaskSpec {
  std::string id;
  std::string instruction;
  std::vector<std::string> keypoint_names;  // order matches the prompt
  int finger_arity = 1;                     // 1, or 4 for scissors/pliers
  double delta_init = 0.10;                 // meters
  int horizon = 300;
  double table_height = 0.0;
  std::vector<SceneObject> objects;
  std::vector<PoseRange> randomization;
  SuccessSpec success;
  Pose6 wrist_home;
  Vec3 wrist_jitter = Vec3::Zero();
  Vec3 reference_euler = Vec3::Zero();  // task-default wrist orientation

  int keypoint_count() const { return static_cast<int>(keypoint_names.size()); }
  void validate() const;
};

// Built-in task suite: the eight manipulation archetypes plus the toy
// tracking task used by the learning smoke test.
TaskSpec task_library(const std::string& id);
std::vector<std::string> task_ids();

// TaskSpec files (JSON). The built-in library is the canonical source; files
// exist so runs can pin or tweak a task without recompiling.
std::string emit_task_spec(const TaskSpec& spec, int indent = 2);
TaskSpec parse_task_spec(const std::string& text);
void save_task_spec(const TaskSpec& spec, const std::string& path);
TaskSpec load_task_spec(const std::string& path);

// Top face of the highest support under (x, y), or table_height if none.
double support_height(const std::vector<SceneObject>& objects, double x, double y,
                      double table_height, const std::string& exclude_id = "");

struct Attachment {
  bool attached = false;
  Pose6 wrist_to_object;   // movable objects: rigid grip transform
  Vec3 last_wrist_position = Vec3::Zero();  // articulated: displacement base
};

struct SimState {
  VecX q = VecX::Zero(HandModel::kDof);
  VecX qd = VecX::Zero(HandModel::kDof);
  VecX smoothed = VecX::Zero(HandModel::kDof);  // normalized residual space
  std::vector<SceneObject> objects;
  std::vector<Attachment> attachments;  // aligned with objects
  int t = 0;
  Eigen::Matrix<double, 4, 7> fingertip_poses = Eigen::Matrix<double, 4, 7>::Zero();
  std::vector<Vec3> initial_keypoints;
  std::vector<Vec3> current_keypoints;

  Pose6 wrist() const;
  void set_wrist(const Pose6& pose);
};

// Minimal per-step record kept for success predicates and trace export.
struct TraceStep {
  int t = 0;
  Vec3 wrist_position = Vec3::Zero();
  std::vector<Vec3> keypoints;
  std::vector<Vec3> object_positions;
  std::vector<double> articulation;
  int contacts = 0;
  double reward = 0.0;
  bool terminated = false;
};
using EpisodeTrace = std::vector<TraceStep>;

bool check_success(const TaskSpec& spec, const EpisodeTrace& trace,
                   const std::vector<SceneObject>& final_objects);

// Early-termination rule and its curriculum.
bool should_terminate(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned,
                      double delta);
double anneal(double delta_init, double progress);

// Counts hammer swings: alternating extrema of the z series with
// peak-to-trough amplitude >= threshold; one swing = one up + one down leg.
int count_swings(const std::vector<double>& z_series, double threshold);

void save_trace_jsonl(const std::string& path, const TaskSpec& spec, const EpisodeTrace& trace);

struct EnvOptions {
  bool smoothing = true;
  double smoothing_gamma = 0.9;
  bool randomize_dynamics = false;  // stiffness/damping stand-in multiplier
  // Domain randomization: per-step N(0, sigma^2) noise on the smoothed command
  // actually driving the controller. The persistent smoothing state (and hence
  // the observation) stays clean; zero disables the draw entirely.
  double action_noise_std = 0.0;
  double contact_distance = 0.015;  // d_c
  double close_threshold = 0.5;     // mean close-command gate for grasping
  double table_margin = 0.002;      // wrist z clamp above the table
  ResidualScale residual_scale;
  // Per-step motion limits at 60 Hz.
  double wrist_linear_rate = 1.5 / 60.0;
  double wrist_angular_rate = 3.0 / 60.0;
  double finger_rate = 6.0 / 60.0;
  double squeeze_rate = 2.0 / 60.0;  // articulation speed for squeeze joints
};

struct StepResult {
  int contacts = 0;
  std::vector<Vec3> keypoints;
};

// One deterministic environment instance. The caller owns the plan: step()
// receives the current plan wrist position and the module never sees rewards
// or observations, keeping the dynamics independently testable.
class Env {
 public:
  Env(TaskSpec spec, EnvOptions options, uint64_t seed, uint64_t stream);

  void reset(uint64_t episode);
  StepResult step(const VecX& action, const Vec3& plan_wrist_position);

  const TaskSpec& spec() const { return spec_; }
  const EnvOptions& options() const { return options_; }
  const SimState& state() const { return state_; }
  const HandModel& hand() const { return hand_; }
  const EpisodeTrace& trace() const { return trace_; }
  double dynamics_multiplier() const { return dynamics_multiplier_; }
  Pose6 initial_wrist() const { return initial_wrist_; }

  int contacts() const;
  bool episode_success() const { return check_success(spec_, trace_, state_.objects); }
  // Appends reward/termination info to the latest trace record.
  void annotate_trace(double reward, bool terminated);

 private:
  void update_keypoints();
  void update_fingertips();
  void record_trace(int contacts);

  TaskSpec spec_;
  EnvOptions options_;
  HandModel hand_;
  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  Rng step_rng_{0};  // per-episode action-noise draws; reseeded by reset()
  double dynamics_multiplier_ = 1.0;
  SimState state_;
  EpisodeTrace trace_;
  Pose6 initial_wrist_;
};

}  // namespace dxs
