#include "geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dxs {

Mat3 Pose6::rotation() const {
  const double ca = std::cos(euler.x()), sa = std::sin(euler.x());
  const double cb = std::cos(euler.y()), sb = std::sin(euler.y());
  const double cc = std::cos(euler.z()), sc = std::sin(euler.z());
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, ca, -sa, 0, sa, ca;
  ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  rz << cc, -sc, 0, sc, cc, 0, 0, 0, 1;
  return rz * ry * rx;
}

Pose6 Pose6::from_rotation(const Vec3& position, const Mat3& r) {
  Pose6 out;
  out.position = position;
  // Extract extrinsic XYZ angles from R = Rz * Ry * Rx.
  const double sy = -r(2, 0);
  if (std::abs(sy) < 1.0 - 1e-12) {
    out.euler.x() = std::atan2(r(2, 1), r(2, 2));
    out.euler.y() = std::asin(sy);
    out.euler.z() = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: pitch at +-pi/2, roll folded into yaw.
    out.euler.x() = 0.0;
    out.euler.y() = sy > 0 ? kPi / 2.0 : -kPi / 2.0;
    out.euler.z() = std::atan2(-r(0, 1), r(1, 1));
  }
  for (int i = 0; i < 3; ++i) out.euler[i] = wrap_angle(out.euler[i]);
  return out;
}

Pose6 compose(const Pose6& a, const Pose6& b) {
  const Mat3 ra = a.rotation();
  return Pose6::from_rotation(ra * b.position + a.position, ra * b.rotation());
}

Pose6 invert(const Pose6& a) {
  const Mat3 rt = a.rotation().transpose();
  return Pose6::from_rotation(-(rt * a.position), rt);
}

Vec3 orientation_error(const Mat3& from, const Mat3& to) {
  Eigen::AngleAxisd aa(to * from.transpose());
  return aa.angle() * aa.axis();
}

double CameraModel::depth_at(int u, int v) const {
  if (u < 0 || u >= width || v < 0 || v >= height)
    throw Error(ErrorCode::OutOfRange, "pixel outside image bounds");
  return depth[static_cast<size_t>(v) * width + u];
}

void CameraModel::validate() const {
  if (fx <= 0.0 || fy <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw Error(ErrorCode::InvalidArgument, "principal point outside image");
}

Pixel denormalize(const NormalizedKeypoint2D& kp, const CameraModel& cam) {
  if (kp.x_norm < 0 || kp.x_norm > 1000 || kp.y_norm < 0 || kp.y_norm > 1000)
    throw Error(ErrorCode::InvalidArgument, "normalized keypoint outside [0, 1000]");
  const auto map = [](int norm, int size) {
    int p = static_cast<int>(std::floor(static_cast<double>(norm) * size / 1000.0));
    return std::clamp(p, 0, size - 1);
  };
  return {map(kp.x_norm, cam.width), map(kp.y_norm, cam.height)};
}

Vec3 backproject(const CameraModel& cam, double u, double v, double depth) {
  if (depth <= 0.0) throw Error(ErrorCode::MissingDepth, "non-positive depth");
  const Vec3 cam_point((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
  return cam.extrinsic.apply(cam_point);
}

Vec3 backproject_pixel(const CameraModel& cam, const Pixel& px) {
  const double d = cam.depth_at(px.u, px.v);
  if (d <= 0.0)
    throw Error(ErrorCode::MissingDepth,
                "missing depth at pixel (" + std::to_string(px.u) + ", " + std::to_string(px.v) + ")");
  return backproject(cam, px.u, px.v, d);
}

Projection project(const CameraModel& cam, const Vec3& world_point) {
  const Pose6 world_to_cam = invert(cam.extrinsic);
  const Vec3 p = world_to_cam.apply(world_point);
  if (p.z() <= 0.0) throw Error(ErrorCode::BehindCamera, "point behind camera");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
}

}  // namespace dxs
