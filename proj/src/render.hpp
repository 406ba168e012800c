#pragma once

#include "env.hpp"
#include "geometry.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dxs {

struct RenderImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height, row-major
};

// Planner-facing observation: schematic color image plus the camera whose
// depth map backprojects image keypoints into the world.
struct CameraSnapshot {
  CameraModel camera;
  RenderImage image;
};

// Camera pose at `eye` with the optical axis through `at` (pinhole frame:
// x right, y down, z forward).
Pose6 look_at(const Vec3& eye, const Vec3& at, const Vec3& up = Vec3::UnitZ());

// Oblique overhead view covering the tabletop workspace.
CameraModel default_task_camera();

// Marker overlay color for keypoint index i; colors are exact so the replay
// and oracle detection paths can recover the keypoint identity from pixels.
std::array<uint8_t, 3> keypoint_marker_color(int index);

// Flat-shaded ray-cast of primitive shapes. Keypoint anchors are painted as
// 3x3 markers whose stored depth is the anchor depth, so a marker pixel
// backprojects to the exact 3D keypoint.
CameraSnapshot render_scene(const CameraModel& camera, const std::vector<SceneObject>& objects,
                            const std::vector<std::string>& keypoint_names);

std::vector<uint8_t> encode_ppm(const RenderImage& image);
void save_ppm(const std::string& path, const RenderImage& image);

}  // namespace dxs
