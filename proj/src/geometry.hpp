#pragma once

#include "common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dxs {

// Rigid transform stored as position + extrinsic-XYZ Euler angles (radians).
// The 6-number layout matches the wrist-pose rows of the observation vector.
struct Pose6 {
  Vec3 position = Vec3::Zero();
  Vec3 euler = Vec3::Zero();  // extrinsic XYZ: R = Rz(ez) * Ry(ey) * Rx(ex)

  Mat3 rotation() const;
  static Pose6 from_rotation(const Vec3& position, const Mat3& rotation);
  static Pose6 identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation() * p + position; }
  Vec6 as_vec6() const {
    Vec6 v;
    v << position, euler;
    return v;
  }
};

Pose6 compose(const Pose6& a, const Pose6& b);
Pose6 invert(const Pose6& a);

// Axis-angle of the rotation taking `from` to `to` (world frame).
Vec3 orientation_error(const Mat3& from, const Mat3& to);

// Normalized VLM keypoint: [y, x] integers in [0, 1000].
struct NormalizedKeypoint2D {
  int y_norm = 0;
  int x_norm = 0;
  std::string name;
};

struct Pixel {
  int u = 0;  // column, x direction
  int v = 0;  // row, y direction
};

// Pinhole camera with a dense depth map (meters, row-major, nearest-pixel
// sampling). `extrinsic` is the camera pose in the world frame.
struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Pose6 extrinsic;
  std::vector<double> depth;  // width*height, 0 = missing

  double depth_at(int u, int v) const;
  void validate() const;
};

// Map a [0,1000]-normalized keypoint onto the pixel grid, clamping at the
// image boundary (VLMs emit 1000 inclusive).
Pixel denormalize(const NormalizedKeypoint2D& kp, const CameraModel& cam);

// Pure pinhole backprojection of a (possibly fractional) pixel at a given
// depth into the world frame.
Vec3 backproject(const CameraModel& cam, double u, double v, double depth);

// Depth-map variant: nearest-pixel depth lookup; throws MissingDepth when the
// stored depth is zero.
Vec3 backproject_pixel(const CameraModel& cam, const Pixel& px);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Pinhole projection of a world point; throws BehindCamera when the
// camera-frame z is not positive.
Projection project(const CameraModel& cam, const Vec3& world_point);

}  // namespace dxs
