#pragma once

#include "common.hpp"

#include <array>
#include <string>
#include <vector>

namespace dxs {

inline constexpr const char* kHandTrack = "hand";
inline constexpr int kPlanWindowSize = 15;

enum class PlanSource { Vlm, Oracle, Prerecorded, Reduced };
const char* plan_source_name(PlanSource s);
PlanSource plan_source_from_name(const std::string& name);

// VLM-emitted waypoints: one track per named keypoint plus the reserved
// "hand" track. points[track][waypoint], meters, world frame.
struct WaypointSequence {
  std::vector<std::string> names;
  std::vector<std::vector<Vec3>> points;

  int waypoint_count() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }
  int keypoint_count() const { return static_cast<int>(names.size()) - 1; }
  int track_index(const std::string& name) const;
  int hand_index() const { return track_index(kHandTrack); }
  void validate() const;
};

// The scaffold: wrist positions and keypoint tracks resampled to the control
// horizon. The wrist track is position-only; orientation is a per-task
// constant reference.
struct KeypointPlan {
  int horizon = 0;  // T
  std::vector<Vec3> wrist;
  std::vector<std::string> keypoint_names;
  std::vector<std::vector<Vec3>> keypoints;  // k tracks of length T
  PlanSource source = PlanSource::Oracle;
  int waypoint_count = 0;  // n

  int keypoint_count() const { return static_cast<int>(keypoints.size()); }
};

// Fixed-length downsampled view of the remaining plan.
struct PlanWindow {
  std::array<Vec3, kPlanWindowSize> wrist;
  std::vector<std::array<Vec3, kPlanWindowSize>> keypoints;
};

enum class InterpolationMode { WaypointIndex, ArcLength };

// Piecewise-linear resampling of all tracks to T steps. The default
// parameterization is by waypoint index; arc length is a config option.
KeypointPlan interpolate(const WaypointSequence& w, int horizon,
                         InterpolationMode mode = InterpolationMode::WaypointIndex);

// Downsampled future plan from step t (1-based) to T: round(linspace(t, T, 15)),
// saturating at the final step.
PlanWindow window(const KeypointPlan& plan, int t);

// Strict trajectory-format parser. When `expected_names` is nonempty the key
// set of every waypoint object must match it exactly; otherwise names are
// inferred from the first object (preserving key order).
WaypointSequence parse_plan_json(const std::string& text,
                                 const std::vector<std::string>& expected_names = {});
std::string emit_plan_json(const WaypointSequence& w, int indent = -1);

struct PlanViolation {
  enum class Kind { Workspace, RigidPair, GraspProximity };
  Kind kind;
  std::string track;
  int step = 0;
  std::string message;
};

struct Aabb {
  Vec3 lo;
  Vec3 hi;
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct PlanValidationOptions {
  double rigid_pair_tolerance = 0.02;   // meters of inter-keypoint drift
  double grasp_proximity_radius = 0.20; // wrist-to-keypoint distance at grasp
  double grasp_motion_epsilon = 0.01;   // keypoint displacement marking grasp
};

// Report-only checks against gross planning failures (out-of-workspace
// keypoints, rigid pairs drifting apart, wrist far from every keypoint when
// objects start moving).
std::vector<PlanViolation> validate_plan(
    const KeypointPlan& plan, const Aabb& workspace,
    const std::vector<std::pair<std::string, std::string>>& rigid_pairs,
    const PlanValidationOptions& opts = {});

// Plan bundle file: everything needed to reproduce an interpolated plan.
struct PlanBundle {
  std::string task_id;
  std::string camera_snapshot_id;
  WaypointSequence waypoints;
  int horizon = 0;
  PlanSource source = PlanSource::Oracle;
};

std::string emit_plan_bundle(const PlanBundle& b);
PlanBundle parse_plan_bundle(const std::string& text);
void save_plan_bundle(const PlanBundle& b, const std::string& path);
PlanBundle load_plan_bundle(const std::string& path);

}  // namespace dxs
