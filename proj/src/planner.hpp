#pragma once

#include "geometry.hpp"
#include "plan.hpp"
#include "render.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dxs {

// Prompt pair for one task. The trajectory template carries `{n}` for the
// waypoint count and `{init:<keypoint>}` / `{init:hand}` placeholders for the
// scene-dependent initial positions; everything else is fixed text.
struct TaskPrompt {
  std::string task_id;
  std::string instruction;  // language command L
  std::string keypoint_template;
  std::string trajectory_template;
  std::vector<std::string> keypoint_names;  // ordered; defines k

  int keypoint_count() const { return static_cast<int>(keypoint_names.size()); }
};

// Prompts for every task in the library; keypoint names and their order match
// the task's scene anchors. Throws UnknownTask.
TaskPrompt task_prompt(const std::string& task_id);

// One planning query: the initial scene image, the camera that produced it
// (whose depth map grounds pixel keypoints in 3D), the initial wrist pose,
// and up to m in-context examples of previously successful plans.
struct PlannerRequest {
  RenderImage image;
  CameraModel camera;
  Pose6 initial_wrist;
  TaskPrompt prompt;
  std::vector<WaypointSequence> examples;  // world frame, chronological
  int waypoint_target = 20;                // n
};

enum class BackendKind { Remote, Replay, Oracle };
const char* backend_kind_name(BackendKind kind);
BackendKind backend_kind_from_name(const std::string& name);

struct BackendConfig {
  BackendKind kind = BackendKind::Oracle;
  // Remote endpoint; the bearer credential is read from the environment
  // variable named below and never stored in configuration files.
  std::string url;
  std::string model;
  std::string credential_env = "DXS_VLM_API_KEY";
  int thinking_budget = 1000;
  double keypoint_temperature = 0.5;
  // The trajectory temperature is not pinned by the source experiments; it
  // defaults to the keypoint value and is recorded in run metadata.
  double trajectory_temperature = 0.5;
  // Replay backends read recorded responses from this directory; remote
  // backends additionally record into it when set.
  std::string cache_dir;
  int schema_retries = 1;  // extra remote attempts on malformed output
};

// Content address of a completion request: prompt text, image bytes, and the
// sampling parameters that shape the response.
uint64_t request_fingerprint(const std::string& prompt_text, const RenderImage& image,
                             const std::string& model, double temperature, int thinking_budget);
std::string fingerprint_hex(uint64_t fingerprint);

// A single completion round-trip. Replay and oracle backends are pure
// functions of the request; remote calls go over HTTPS with the credential
// from the configured environment variable.
class PlannerBackend {
 public:
  explicit PlannerBackend(BackendConfig config);

  const BackendConfig& config() const { return config_; }
  bool deterministic() const { return config_.kind != BackendKind::Remote; }

  // Returns the raw response text for one prompt. Replay: cache lookup by
  // fingerprint (BackendError on miss). Remote: POST, with the response
  // recorded into cache_dir when configured. Oracle never reaches this
  // (detect/generate synthesize its output) and reports BackendError.
  std::string complete(const std::string& prompt_text, const RenderImage& image,
                       double temperature) const;

 private:
  std::string replay_lookup(uint64_t fingerprint) const;
  std::string remote_call(const std::string& prompt_text, const RenderImage& image,
                          double temperature, uint64_t fingerprint) const;

  BackendConfig config_;
};

// Rendered prompt texts (exact strings sent to the model).
std::string render_keypoint_prompt(const TaskPrompt& prompt);
// Initial positions are expressed relative to the first keypoint ("x forward,
// y left, z up", first keypoint at the origin), formatted as [x.xx, y.yy,
// z.zz]; in-context examples are appended in the plan JSON format, translated
// into the same relative frame.
std::string render_trajectory_prompt(const PlannerRequest& req,
                                     const std::vector<Vec3>& keypoints);

struct DetectedKeypoint {
  std::string name;
  Pixel pixel;    // image location after denormalization
  Vec3 position;  // backprojected world point
};

// Queries for the task's keypoints and grounds them in 3D through the depth
// map. Responses use the [y, x] 0-1000 convention. Results follow the
// template's name order; a missing or malformed entry is a SchemaError.
std::vector<DetectedKeypoint> detect_keypoints(const PlannerBackend& backend,
                                               const PlannerRequest& req);

// Queries for the waypoint trajectory, parses the plan JSON (raw or inside a
// fenced block), translates it back to the world frame, anchors waypoint 0 of
// every keypoint track to its detected position, and enforces the waypoint
// count (CountMismatch otherwise).
WaypointSequence generate_waypoints(const PlannerBackend& backend, const PlannerRequest& req,
                                    const std::vector<DetectedKeypoint>& keypoints);

// detect + generate.
WaypointSequence plan_task(const PlannerBackend& backend, const PlannerRequest& req);

// Hard-coded per-task trajectories anchored at the detected keypoints:
// approach, grasp, then the task motion. Deterministic; passes the plan
// validator with zero violations inside the standard workspace.
WaypointSequence oracle_plan(const std::string& task_id, const std::vector<Vec3>& keypoints,
                             const Vec3& initial_wrist, int waypoint_count = 20);

// New request carrying the most recent successful plans (up to max_examples)
// as in-context examples. An empty history returns the request unchanged.
PlannerRequest refine_fewshot(const std::vector<WaypointSequence>& history,
                              const PlannerRequest& req, int max_examples = 3);

// Workspace bounds and rigid keypoint pairs used when validating plans.
Aabb task_workspace(const std::string& task_id);
std::vector<std::pair<std::string, std::string>> task_rigid_pairs(const std::string& task_id);

}  // namespace dxs
