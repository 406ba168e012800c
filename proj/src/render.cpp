#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

namespace dxs {

Pose6 look_at(const Vec3& eye, const Vec3& at, const Vec3& up) {
  const Vec3 forward = at - eye;
  if (forward.norm() < 1e-9)
    throw Error(ErrorCode::InvalidArgument, "look_at eye and target coincide");
  const Vec3 z = forward.normalized();
  Vec3 down = -up + z * up.dot(z);  // image y axis: world-down projected off the axis
  if (down.norm() < 1e-9) down = Vec3(0.0, 1.0, 0.0);
  const Vec3 y = down.normalized();
  const Vec3 x = y.cross(z);
  Mat3 rotation;
  rotation.col(0) = x;
  rotation.col(1) = y;
  rotation.col(2) = z;
  return Pose6::from_rotation(eye, rotation);
}

CameraModel default_task_camera() {
  CameraModel cam;
  cam.width = 480;
  cam.height = 480;
  cam.fx = cam.fy = 520.0;
  cam.cx = cam.cy = 240.0;
  cam.extrinsic = look_at(Vec3(0.85, 0.0, 0.75), Vec3(0.05, 0.0, 0.05));
  cam.validate();
  return cam;
}

std::array<uint8_t, 3> keypoint_marker_color(int index) {
  if (index < 0 || index > 15)
    throw Error(ErrorCode::OutOfRange, "keypoint marker index out of range");
  return {255, static_cast<uint8_t>(16 + 14 * index), 250};
}

namespace {

// Ray/primitive intersection in the canonical shape frame; returns the ray
// parameter of the nearest hit in front of the origin.
std::optional<double> ray_shape(const SceneObject& obj, const Vec3& origin, const Vec3& dir) {
  constexpr double kEps = 1e-12;
  const Vec3 o = obj.to_shape_frame(origin);
  const Vec3 d = obj.to_shape_frame_vector(dir);
  switch (obj.shape) {
    case ShapeKind::Sphere: {
      const double r = obj.dims.x();
      const double b = 2.0 * o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - 4.0 * c;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      const double t0 = (-b - sq) / 2.0;
      const double t1 = (-b + sq) / 2.0;
      if (t0 > kEps) return t0;
      if (t1 > kEps) return t1;
      return std::nullopt;
    }
    case ShapeKind::Box: {
      const Vec3 half = obj.dims / 2.0;
      double tmin = -std::numeric_limits<double>::infinity();
      double tmax = std::numeric_limits<double>::infinity();
      for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(d[axis]) < kEps) {
          if (std::abs(o[axis]) > half[axis]) return std::nullopt;
          continue;
        }
        double t0 = (-half[axis] - o[axis]) / d[axis];
        double t1 = (half[axis] - o[axis]) / d[axis];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return std::nullopt;
      }
      if (tmin > kEps) return tmin;
      if (tmax > kEps) return tmax;
      return std::nullopt;
    }
    case ShapeKind::Cylinder: {
      const double r = obj.dims.x();
      const double hz = obj.dims.z() / 2.0;
      double best = std::numeric_limits<double>::infinity();
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > kEps) {
        const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
        const double c = o.x() * o.x() + o.y() * o.y() - r * r;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
            if (t > kEps && std::abs(o.z() + t * d.z()) <= hz) best = std::min(best, t);
          }
        }
      }
      if (std::abs(d.z()) > kEps) {
        for (const double cap : {-hz, hz}) {
          const double t = (cap - o.z()) / d.z();
          if (t <= kEps || t >= best) continue;
          const double px = o.x() + t * d.x();
          const double py = o.y() + t * d.y();
          if (px * px + py * py <= r * r) best = t;
        }
      }
      if (std::isfinite(best)) return best;
      return std::nullopt;
    }
  }
  throw Error(ErrorCode::Internal, "unhandled shape kind");
}

uint8_t to_byte(double channel) {
  return static_cast<uint8_t>(std::lround(std::clamp(channel, 0.0, 1.0) * 255.0));
}

}  // namespace

CameraSnapshot render_scene(const CameraModel& camera, const std::vector<SceneObject>& objects,
                            const std::vector<std::string>& keypoint_names) {
  camera.validate();
  CameraSnapshot snap;
  snap.camera = camera;
  snap.camera.depth.assign(static_cast<size_t>(camera.width) * camera.height, 0.0);
  snap.image.width = camera.width;
  snap.image.height = camera.height;
  snap.image.rgb.assign(static_cast<size_t>(camera.width) * camera.height * 3, 0);

  const Mat3 rotation = camera.extrinsic.rotation();
  const Vec3 eye = camera.extrinsic.position;
  const Vec3 background(0.12, 0.12, 0.14);

  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Vec3 dir_cam =
          Vec3((u + 0.5 - camera.cx) / camera.fx, (v + 0.5 - camera.cy) / camera.fy, 1.0)
              .normalized();
      const Vec3 dir = rotation * dir_cam;
      double best_t = std::numeric_limits<double>::infinity();
      const SceneObject* hit = nullptr;
      for (const auto& obj : objects) {
        const auto t = ray_shape(obj, eye, dir);
        if (t.has_value() && *t < best_t) {
          best_t = *t;
          hit = &obj;
        }
      }
      const size_t px = static_cast<size_t>(v) * camera.width + u;
      Vec3 color = background;
      if (hit != nullptr) {
        // Flat shading with mild depth attenuation to separate silhouettes.
        const double shade = std::clamp(1.1 - 0.25 * best_t, 0.55, 1.0);
        color = hit->color * shade;
        snap.camera.depth[px] = best_t * dir_cam.z();  // camera-frame z
      }
      snap.image.rgb[px * 3 + 0] = to_byte(color.x());
      snap.image.rgb[px * 3 + 1] = to_byte(color.y());
      snap.image.rgb[px * 3 + 2] = to_byte(color.z());
    }
  }

  // Keypoint markers: overlay color and anchor depth so detection + pinhole
  // backprojection recovers the 3D anchor.
  for (size_t i = 0; i < keypoint_names.size(); ++i) {
    const SceneObject* owner = nullptr;
    for (const auto& obj : objects) {
      if (obj.has_anchor(keypoint_names[i])) {
        owner = &obj;
        break;
      }
    }
    if (owner == nullptr)
      throw Error(ErrorCode::InvalidArgument,
                  "no object owns keypoint '" + keypoint_names[i] + "'");
    const Vec3 anchor = owner->anchor_world(keypoint_names[i]);
    Projection proj;
    try {
      proj = project(snap.camera, anchor);
    } catch (const Error&) {
      continue;  // behind the camera: not visible in this snapshot
    }
    const int cu = static_cast<int>(std::lround(proj.u));
    const int cv = static_cast<int>(std::lround(proj.v));
    const auto marker = keypoint_marker_color(static_cast<int>(i));
    for (int dv = -1; dv <= 1; ++dv) {
      for (int du = -1; du <= 1; ++du) {
        const int mu = cu + du;
        const int mv = cv + dv;
        if (mu < 0 || mu >= camera.width || mv < 0 || mv >= camera.height) continue;
        const size_t px = static_cast<size_t>(mv) * camera.width + mu;
        snap.image.rgb[px * 3 + 0] = marker[0];
        snap.image.rgb[px * 3 + 1] = marker[1];
        snap.image.rgb[px * 3 + 2] = marker[2];
        snap.camera.depth[px] = proj.depth;
      }
    }
  }
  return snap;
}

std::vector<uint8_t> encode_ppm(const RenderImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != static_cast<size_t>(image.width) * image.height * 3)
    throw Error(ErrorCode::InvalidArgument, "render image dimensions inconsistent");
  std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                       "\n255\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.rgb.begin(), image.rgb.end());
  return bytes;
}

void save_ppm(const std::string& path, const RenderImage& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace dxs
