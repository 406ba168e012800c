#include "env.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dxs {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// HandModel

HandModel HandModel::standard() {
  HandModel hand;
  // Two finger pairs facing each other across the palm center; chains point
  // straight down (-z) when fully open and curl toward the palm.
  hand.finger_bases = {Vec3(0.045, 0.03, 0.0), Vec3(0.045, -0.03, 0.0),
                       Vec3(-0.045, 0.03, 0.0), Vec3(-0.045, -0.03, 0.0)};
  hand.curl_sign = {-1.0, -1.0, 1.0, 1.0};
  hand.finger_lower = VecX::Zero(kFingerDof);
  hand.finger_upper = VecX::Constant(kFingerDof, 1.1);
  return hand;
}

FingerCoupling HandModel::coupling(int arity) const {
  if (arity != 1 && arity != 4)
    throw Error(ErrorCode::InvalidArgument,
                "finger action arity must be 1 or 4, got " + std::to_string(arity));
  FingerCoupling c;
  c.group_of.resize(kFingerDof);
  for (int j = 0; j < kFingerDof; ++j) c.group_of[j] = arity == 1 ? 0 : j / kJointsPerFinger;
  c.lower = finger_lower;
  c.upper = finger_upper;
  return c;
}

namespace {

// Planar curl: cumulative angle phi tilts each segment from straight-down
// (-z) toward the palm center along the local x axis.
Vec3 finger_chain_local(const HandModel& hand, const VecX& finger_q, int finger, double* phi_out) {
  if (finger < 0 || finger >= HandModel::kFingers)
    throw Error(ErrorCode::OutOfRange, "finger index out of range");
  if (finger_q.size() != HandModel::kFingerDof)
    throw Error(ErrorCode::DimensionMismatch, "expected 16 finger joints");
  const double s = hand.curl_sign[static_cast<size_t>(finger)];
  double phi = 0.0;
  Vec3 p = hand.finger_bases[static_cast<size_t>(finger)];
  for (int j = 0; j < HandModel::kJointsPerFinger; ++j) {
    phi += finger_q[finger * HandModel::kJointsPerFinger + j];
    p += hand.link_lengths[static_cast<size_t>(j)] * Vec3(s * std::sin(phi), 0.0, -std::cos(phi));
  }
  if (phi_out != nullptr) *phi_out = phi;
  return p;
}

}  // namespace

Vec3 HandModel::fingertip_position(const Pose6& wrist, const VecX& finger_q, int finger) const {
  return wrist.apply(finger_chain_local(*this, finger_q, finger, nullptr));
}

Eigen::Matrix<double, 7, 1> HandModel::fingertip_pose(const Pose6& wrist, const VecX& finger_q,
                                                      int finger) const {
  double phi = 0.0;
  const Vec3 local = finger_chain_local(*this, finger_q, finger, &phi);
  const double s = curl_sign[static_cast<size_t>(finger)];
  const Mat3 rot = wrist.rotation() * Eigen::AngleAxisd(-s * phi, Vec3::UnitY()).toRotationMatrix();
  Eigen::Quaterniond q(rot);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;  // canonical hemisphere
  Eigen::Matrix<double, 7, 1> pose;
  pose << wrist.apply(local), q.w(), q.x(), q.y(), q.z();
  return pose;
}

// ---------------------------------------------------------------------------
// SceneObject

Vec3 SceneObject::articulate(const Vec3& local) const {
  switch (articulation.kind) {
    case ArticulationKind::None:
      return local;
    case ArticulationKind::Prismatic:
      return local + articulation.axis.normalized() * articulation_value;
    case ArticulationKind::Revolute: {
      const Eigen::AngleAxisd rot(articulation_value, articulation.axis.normalized());
      return articulation.pivot + rot * (local - articulation.pivot);
    }
    case ArticulationKind::RevoluteSqueeze: {
      const double side =
          (local - articulation.pivot).dot(articulation.split_normal) >= 0.0 ? 1.0 : -1.0;
      const Eigen::AngleAxisd rot(side * articulation_value / 2.0, articulation.axis.normalized());
      return articulation.pivot + rot * (local - articulation.pivot);
    }
  }
  throw Error(ErrorCode::Internal, "unhandled articulation kind");
}

Vec3 SceneObject::anchor_world(const std::string& name) const {
  auto it = anchors.find(name);
  if (it == anchors.end())
    throw Error(ErrorCode::InvalidArgument, "object '" + id + "' has no anchor '" + name + "'");
  return point_world(it->second);
}

Vec3 SceneObject::to_shape_frame(const Vec3& world_point) const {
  Vec3 p = invert(pose).apply(world_point);
  switch (articulation.kind) {
    case ArticulationKind::None:
    case ArticulationKind::RevoluteSqueeze:
      return p;
    case ArticulationKind::Prismatic:
      return p - articulation.axis.normalized() * articulation_value;
    case ArticulationKind::Revolute: {
      const Eigen::AngleAxisd rot(-articulation_value, articulation.axis.normalized());
      return articulation.pivot + rot * (p - articulation.pivot);
    }
  }
  throw Error(ErrorCode::Internal, "unhandled articulation kind");
}

Vec3 SceneObject::to_shape_frame_vector(const Vec3& world_vector) const {
  Vec3 v = pose.rotation().transpose() * world_vector;
  if (articulation.kind == ArticulationKind::Revolute) {
    const Eigen::AngleAxisd rot(-articulation_value, articulation.axis.normalized());
    v = rot * v;
  }
  return v;
}

double SceneObject::signed_distance(const Vec3& world_point) const {
  const Vec3 p = to_shape_frame(world_point);
  switch (shape) {
    case ShapeKind::Sphere:
      return p.norm() - dims.x();
    case ShapeKind::Box: {
      const Vec3 d = p.cwiseAbs() - dims / 2.0;
      const double outside = d.cwiseMax(0.0).norm();
      const double inside = std::min(d.maxCoeff(), 0.0);
      return outside + inside;
    }
    case ShapeKind::Cylinder: {
      const double dr = std::hypot(p.x(), p.y()) - dims.x();
      const double dz = std::abs(p.z()) - dims.z() / 2.0;
      const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      const double inside = std::min(std::max(dr, dz), 0.0);
      return outside + inside;
    }
  }
  throw Error(ErrorCode::Internal, "unhandled shape kind");
}

double SceneObject::bottom_offset() const {
  switch (shape) {
    case ShapeKind::Sphere:
      return dims.x();
    case ShapeKind::Box:
    case ShapeKind::Cylinder:
      return dims.z() / 2.0;
  }
  throw Error(ErrorCode::Internal, "unhandled shape kind");
}

double SceneObject::top_height() const { return pose.position.z() + bottom_offset(); }

bool SceneObject::footprint_contains(double x, double y) const {
  const Vec3 local = invert(pose).apply(Vec3(x, y, pose.position.z()));
  switch (shape) {
    case ShapeKind::Box:
      return std::abs(local.x()) <= dims.x() / 2.0 && std::abs(local.y()) <= dims.y() / 2.0;
    case ShapeKind::Cylinder:
    case ShapeKind::Sphere:
      return std::hypot(local.x(), local.y()) <= dims.x();
  }
  throw Error(ErrorCode::Internal, "unhandled shape kind");
}

double support_height(const std::vector<SceneObject>& objects, double x, double y,
                      double table_height, const std::string& exclude_id) {
  double top = table_height;
  for (const auto& obj : objects) {
    if (!obj.is_support || obj.id == exclude_id) continue;
    if (obj.footprint_contains(x, y)) top = std::max(top, obj.top_height());
  }
  return top;
}

// ---------------------------------------------------------------------------
// TaskSpec

namespace {

const SceneObject& find_object(const std::vector<SceneObject>& objects, const std::string& id) {
  for (const auto& obj : objects)
    if (obj.id == id) return obj;
  throw Error(ErrorCode::InvalidArgument, "unknown object id '" + id + "'");
}

const std::set<std::string> kPredicates = {"pick_place", "drawer",      "fridge", "hammer",
                                           "wipe",       "close_angle", "track"};

}  // namespace

void TaskSpec::validate() const {
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, "task id is empty");
  if (keypoint_names.empty())
    throw Error(ErrorCode::InvalidArgument, "task '" + id + "' has no keypoints");
  if (finger_arity != 1 && finger_arity != 4)
    throw Error(ErrorCode::InvalidArgument, "finger action arity must be 1 or 4");
  if (delta_init <= 0.0) throw Error(ErrorCode::InvalidArgument, "delta_init must be positive");
  if (horizon <= 0) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  if (objects.empty()) throw Error(ErrorCode::InvalidArgument, "task has no objects");

  std::set<std::string> seen;
  for (const auto& name : keypoint_names) {
    if (!seen.insert(name).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate keypoint name '" + name + "'");
    int owners = 0;
    for (const auto& obj : objects) owners += obj.has_anchor(name) ? 1 : 0;
    if (owners != 1)
      throw Error(ErrorCode::InvalidArgument,
                  "keypoint '" + name + "' must have exactly one owning object, found " +
                      std::to_string(owners));
  }
  for (const auto& obj : objects) {
    if (obj.articulation.kind != ArticulationKind::None) {
      if (obj.articulation.lower > obj.articulation.upper)
        throw Error(ErrorCode::InvalidArgument, "articulation range inverted on '" + obj.id + "'");
      if (obj.articulation_value < obj.articulation.lower ||
          obj.articulation_value > obj.articulation.upper)
        throw Error(ErrorCode::OutOfRange, "articulation start outside range on '" + obj.id + "'");
    }
  }
  for (const auto& range : randomization) find_object(objects, range.object_id);
  if (kPredicates.count(success.predicate) == 0)
    throw Error(ErrorCode::InvalidArgument, "unknown success predicate '" + success.predicate + "'");
  if (success.predicate != "track") find_object(objects, success.object_id);
  if (success.predicate == "pick_place") find_object(objects, success.target_object_id);
  if (success.predicate == "hammer" || success.predicate == "wipe") {
    if (std::find(keypoint_names.begin(), keypoint_names.end(), success.keypoint) ==
        keypoint_names.end())
      throw Error(ErrorCode::InvalidArgument,
                  "success keypoint '" + success.keypoint + "' is not a task keypoint");
  }
}

// ---------------------------------------------------------------------------
// Task library

namespace {

SceneObject make_counter() {
  SceneObject counter;
  counter.id = "counter";
  counter.shape = ShapeKind::Box;
  counter.dims = Vec3(1.2, 1.2, 0.04);
  counter.pose.position = Vec3(0.0, 0.0, -0.02);  // top face at z = 0
  counter.is_support = true;
  counter.color = Vec3(0.78, 0.76, 0.72);
  return counter;
}

TaskSpec base_task(const std::string& id, const std::string& instruction) {
  TaskSpec spec;
  spec.id = id;
  spec.instruction = instruction;
  spec.horizon = 300;
  spec.table_height = 0.0;
  spec.objects.push_back(make_counter());
  spec.wrist_home.position = Vec3(-0.05, 0.0, 0.22);
  spec.wrist_jitter = Vec3(0.03, 0.03, 0.02);
  return spec;
}

TaskSpec make_move_apple() {
  TaskSpec spec = base_task("move_apple", "Move the apple onto the cutting board.");
  SceneObject apple;
  apple.id = "apple";
  apple.shape = ShapeKind::Sphere;
  apple.dims = Vec3(0.04, 0.04, 0.04);
  apple.pose.position = Vec3(-0.18, 0.0, 0.04);
  apple.movable = true;
  apple.color = Vec3(0.82, 0.12, 0.10);
  apple.anchors["apple"] = Vec3::Zero();
  SceneObject board;
  board.id = "cutting_board";
  board.shape = ShapeKind::Box;
  board.dims = Vec3(0.26, 0.18, 0.02);
  board.pose.position = Vec3(0.18, 0.05, 0.01);
  board.is_support = true;
  board.color = Vec3(0.85, 0.70, 0.45);
  board.anchors["cutting board"] = Vec3(0.0, 0.0, 0.01);
  spec.objects.push_back(apple);
  spec.objects.push_back(board);
  spec.randomization.push_back({"apple", Vec3(-0.28, -0.15, 0.04), Vec3(-0.10, 0.15, 0.04), 0, 0});
  spec.randomization.push_back(
      {"cutting_board", Vec3(0.12, -0.12, 0.01), Vec3(0.25, 0.12, 0.01), -0.4, 0.4});
  spec.keypoint_names = {"apple", "cutting board"};
  spec.delta_init = 0.10;
  spec.success = {"pick_place", "apple", "cutting_board", "", Vec3(0.0, 0.0, 0.01), 0.08, 0.0, 0};
  return spec;
}

TaskSpec make_move_bottle() {
  TaskSpec spec =
      base_task("move_bottle", "Move the bottle to the target point on the other side of the sink.");
  SceneObject bottle;
  bottle.id = "bottle";
  bottle.shape = ShapeKind::Cylinder;
  bottle.dims = Vec3(0.03, 0.0, 0.16);
  bottle.pose.position = Vec3(-0.22, 0.05, 0.08);
  bottle.movable = true;
  bottle.color = Vec3(0.20, 0.45, 0.80);
  bottle.anchors["bottle"] = Vec3::Zero();
  SceneObject sink;
  sink.id = "sink";
  sink.shape = ShapeKind::Box;
  sink.dims = Vec3(0.22, 0.30, 0.004);
  sink.pose.position = Vec3(0.02, 0.0, -0.002);
  sink.color = Vec3(0.35, 0.38, 0.42);
  SceneObject marker;
  marker.id = "target_marker";
  marker.shape = ShapeKind::Cylinder;
  marker.dims = Vec3(0.035, 0.0, 0.004);
  marker.pose.position = Vec3(0.24, -0.02, 0.002);
  marker.color = Vec3(0.20, 0.75, 0.30);
  marker.anchors["point"] = Vec3::Zero();
  spec.objects.push_back(bottle);
  spec.objects.push_back(sink);
  spec.objects.push_back(marker);
  spec.randomization.push_back(
      {"bottle", Vec3(-0.30, -0.12, 0.08), Vec3(-0.15, 0.12, 0.08), 0, 0});
  spec.randomization.push_back(
      {"target_marker", Vec3(0.18, -0.12, 0.002), Vec3(0.30, 0.12, 0.002), 0, 0});
  spec.keypoint_names = {"bottle", "point"};
  spec.delta_init = 0.10;
  spec.success = {"pick_place", "bottle", "target_marker", "", Vec3::Zero(), 0.06, 0.0, 0};
  return spec;
}

TaskSpec make_open_drawer() {
  TaskSpec spec = base_task("open_drawer", "Open the top drawer.");
  SceneObject cabinet;
  cabinet.id = "cabinet";
  cabinet.shape = ShapeKind::Box;
  cabinet.dims = Vec3(0.30, 0.40, 0.30);
  cabinet.pose.position = Vec3(0.34, 0.0, 0.15);
  cabinet.color = Vec3(0.55, 0.45, 0.35);
  SceneObject drawer;
  drawer.id = "drawer";
  drawer.shape = ShapeKind::Box;
  drawer.dims = Vec3(0.06, 0.34, 0.10);
  drawer.pose.position = Vec3(0.16, 0.0, 0.22);
  drawer.color = Vec3(0.62, 0.52, 0.40);
  drawer.articulation.kind = ArticulationKind::Prismatic;
  drawer.articulation.axis = Vec3(-1.0, 0.0, 0.0);  // pulls out toward the hand
  drawer.articulation.lower = 0.0;
  drawer.articulation.upper = 0.35;
  drawer.anchors["handle"] = Vec3(-0.035, 0.0, 0.0);
  spec.objects.push_back(cabinet);
  spec.objects.push_back(drawer);
  spec.keypoint_names = {"handle"};
  spec.delta_init = 0.15;
  spec.wrist_home.position = Vec3(0.0, 0.0, 0.25);
  spec.success = {"drawer", "drawer", "", "", Vec3::Zero(), 0.0, 0.20, 0};
  return spec;
}

TaskSpec make_open_fridge() {
  TaskSpec spec = base_task("open_fridge", "Open the fridge door.");
  SceneObject body;
  body.id = "fridge_body";
  body.shape = ShapeKind::Box;
  body.dims = Vec3(0.35, 0.45, 0.50);
  body.pose.position = Vec3(0.42, -0.08, 0.25);
  body.color = Vec3(0.80, 0.80, 0.82);
  SceneObject door;
  door.id = "fridge_door";
  door.shape = ShapeKind::Box;
  door.dims = Vec3(0.03, 0.45, 0.50);
  door.pose.position = Vec3(0.23, -0.08, 0.25);
  door.color = Vec3(0.85, 0.86, 0.88);
  door.articulation.kind = ArticulationKind::Revolute;
  door.articulation.axis = Vec3(0.0, 0.0, 1.0);
  door.articulation.pivot = Vec3(0.0, -0.225, 0.0);  // hinge edge
  door.articulation.lower = 0.0;
  door.articulation.upper = 2.0;
  door.anchors["handle"] = Vec3(-0.025, 0.20, 0.0);
  spec.objects.push_back(body);
  spec.objects.push_back(door);
  spec.keypoint_names = {"handle"};
  spec.delta_init = 0.20;
  spec.wrist_home.position = Vec3(0.05, 0.10, 0.28);
  spec.success = {"fridge", "fridge_door", "", "", Vec3::Zero(), 0.0, kPi / 3.0, 0};
  return spec;
}

TaskSpec make_hammer_nail() {
  TaskSpec spec = base_task("hammer_nail", "Pick up the hammer and hammer the nail.");
  SceneObject hammer;
  hammer.id = "hammer";
  hammer.shape = ShapeKind::Box;
  hammer.dims = Vec3(0.24, 0.03, 0.03);
  hammer.pose.position = Vec3(-0.16, -0.05, 0.015);
  hammer.movable = true;
  hammer.color = Vec3(0.45, 0.30, 0.20);
  hammer.anchors["handle"] = Vec3(-0.07, 0.0, 0.0);
  hammer.anchors["head"] = Vec3(0.10, 0.0, 0.01);
  SceneObject nail;
  nail.id = "nail";
  nail.shape = ShapeKind::Cylinder;
  nail.dims = Vec3(0.006, 0.0, 0.05);
  nail.pose.position = Vec3(0.22, 0.12, 0.025);
  nail.color = Vec3(0.55, 0.55, 0.58);
  spec.objects.push_back(hammer);
  spec.objects.push_back(nail);
  spec.randomization.push_back(
      {"hammer", Vec3(-0.25, -0.12, 0.015), Vec3(-0.08, 0.08, 0.015), -0.5, 0.5});
  spec.keypoint_names = {"handle", "head"};
  spec.delta_init = 0.08;
  spec.success = {"hammer", "hammer", "", "head", Vec3::Zero(), 0.0, 0.05, 3};
  return spec;
}

TaskSpec make_wipe_sponge() {
  TaskSpec spec = base_task("wipe_sponge", "Wipe the counter with the sponge.");
  SceneObject sponge;
  sponge.id = "sponge";
  sponge.shape = ShapeKind::Box;
  sponge.dims = Vec3(0.08, 0.05, 0.03);
  sponge.pose.position = Vec3(-0.12, 0.08, 0.015);
  sponge.movable = true;
  sponge.color = Vec3(0.95, 0.80, 0.25);
  sponge.anchors["sponge"] = Vec3::Zero();
  spec.objects.push_back(sponge);
  spec.randomization.push_back(
      {"sponge", Vec3(-0.20, -0.10, 0.015), Vec3(-0.05, 0.12, 0.015), -0.6, 0.6});
  spec.keypoint_names = {"sponge"};
  spec.delta_init = 0.08;
  spec.success = {"wipe", "sponge", "", "sponge", Vec3::Zero(), 0.0, 0.30, 0};
  return spec;
}

TaskSpec make_squeeze_task(const std::string& id, const std::string& instruction,
                           const std::string& object_id, const Vec3& dims, const Vec3& start,
                           const Vec3& pivot, double open_angle, const Vec3& handle_offset,
                           const Vec3& color, double delta_init, const std::string& grip_a,
                           const std::string& grip_b) {
  TaskSpec spec = base_task(id, instruction);
  SceneObject tool;
  tool.id = object_id;
  tool.shape = ShapeKind::Box;
  tool.dims = dims;
  tool.pose.position = start;
  tool.color = color;
  tool.articulation.kind = ArticulationKind::RevoluteSqueeze;
  tool.articulation.axis = Vec3(0.0, 0.0, 1.0);
  tool.articulation.pivot = pivot;
  tool.articulation.split_normal = Vec3(0.0, 1.0, 0.0);
  tool.articulation.lower = 0.0;
  tool.articulation.upper = open_angle;
  tool.articulation_value = open_angle;  // starts fully open
  tool.anchors[grip_a] = Vec3(handle_offset.x(), handle_offset.y(), handle_offset.z());
  tool.anchors[grip_b] = Vec3(handle_offset.x(), -handle_offset.y(), handle_offset.z());
  spec.objects.push_back(tool);
  spec.randomization.push_back({object_id, Vec3(-0.10, -0.06, start.z()),
                                Vec3(0.02, 0.08, start.z()), -0.5, 0.5});
  spec.keypoint_names = {grip_a, grip_b};
  spec.finger_arity = 4;
  spec.delta_init = delta_init;
  spec.success = {"close_angle", object_id, "", "", Vec3::Zero(), 0.0, 5.0 * kPi / 180.0, 0};
  return spec;
}

TaskSpec make_track_toy() {
  TaskSpec spec = base_task("track_toy", "Follow the reference trajectory with the marker puck.");
  SceneObject puck;
  puck.id = "puck";
  puck.shape = ShapeKind::Sphere;
  puck.dims = Vec3(0.025, 0.025, 0.025);
  puck.pose.position = Vec3(0.0, 0.0, -0.07);  // wrist-relative weld offset
  puck.welded_to_wrist = true;
  puck.color = Vec3(0.95, 0.45, 0.10);
  puck.anchors["marker"] = Vec3::Zero();
  spec.objects.push_back(puck);
  spec.keypoint_names = {"marker"};
  spec.delta_init = 0.05;
  spec.horizon = 120;
  spec.wrist_home.position = Vec3(0.0, 0.0, 0.25);
  spec.wrist_jitter = Vec3(0.04, 0.04, 0.03);
  spec.success = {"track", "puck", "", "", Vec3::Zero(), 0.0, 0.0, 0};
  return spec;
}

}  // namespace

std::vector<std::string> task_ids() {
  return {"move_apple", "move_bottle", "open_drawer",    "open_fridge",  "hammer_nail",
          "wipe_sponge", "close_scissors", "close_pliers", "track_toy"};
}

TaskSpec task_library(const std::string& id) {
  TaskSpec spec;
  if (id == "move_apple") {
    spec = make_move_apple();
  } else if (id == "move_bottle") {
    spec = make_move_bottle();
  } else if (id == "open_drawer") {
    spec = make_open_drawer();
  } else if (id == "open_fridge") {
    spec = make_open_fridge();
  } else if (id == "hammer_nail") {
    spec = make_hammer_nail();
  } else if (id == "wipe_sponge") {
    spec = make_wipe_sponge();
  } else if (id == "close_scissors") {
    spec = make_squeeze_task("close_scissors", "Close the scissors.", "scissors",
                             Vec3(0.16, 0.06, 0.01), Vec3(-0.05, 0.02, 0.005),
                             Vec3(0.02, 0.0, 0.0), 0.6, Vec3(-0.06, 0.014, 0.0),
                             Vec3(0.75, 0.20, 0.25), 0.03, "loop 1", "loop 2");
  } else if (id == "close_pliers") {
    spec = make_squeeze_task("close_pliers", "Close the pliers.", "pliers",
                             Vec3(0.18, 0.07, 0.015), Vec3(-0.02, -0.03, 0.0075),
                             Vec3(0.05, 0.0, 0.0), 0.7, Vec3(-0.06, 0.018, 0.0),
                             Vec3(0.25, 0.30, 0.70), 0.05, "handle left", "handle right");
  } else if (id == "track_toy") {
    spec = make_track_toy();
  } else {
    throw Error(ErrorCode::UnknownTask, "unknown task id '" + id + "'");
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// SimState

Pose6 SimState::wrist() const {
  Pose6 pose;
  pose.position = q.head<3>();
  pose.euler = q.segment<3>(3);
  return pose;
}

void SimState::set_wrist(const Pose6& pose) {
  q.head<3>() = pose.position;
  q.segment<3>(3) = pose.euler;
}

// ---------------------------------------------------------------------------
// Predicates

double anneal(double delta_init, double progress) {
  if (delta_init <= 0.0) throw Error(ErrorCode::InvalidArgument, "delta_init must be positive");
  const double p = std::clamp(progress, 0.0, 1.0);
  return delta_init * (1.0 - p / 2.0);
}

bool should_terminate(const std::vector<Vec3>& tracked, const std::vector<Vec3>& planned,
                      double delta) {
  if (tracked.empty() || tracked.size() != planned.size())
    throw Error(ErrorCode::DimensionMismatch, "tracked/planned keypoint counts differ");
  double sum = 0.0;
  for (size_t i = 0; i < tracked.size(); ++i) sum += (tracked[i] - planned[i]).norm();
  return sum / static_cast<double>(tracked.size()) > delta;
}

int count_swings(const std::vector<double>& z_series, double threshold) {
  if (threshold <= 0.0) throw Error(ErrorCode::InvalidArgument, "swing threshold must be positive");
  if (z_series.size() < 2) return 0;
  // Zigzag leg counting: a leg is a monotone excursion of at least the
  // threshold; a swing is an up leg plus a down leg.
  int legs = 0;
  int dir = 0;
  double hi = z_series[0], lo = z_series[0], extreme = z_series[0];
  for (size_t i = 1; i < z_series.size(); ++i) {
    const double v = z_series[i];
    if (dir == 0) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
      if (v - lo >= threshold) {
        dir = 1;
        extreme = v;
        legs = 1;
      } else if (hi - v >= threshold) {
        dir = -1;
        extreme = v;
        legs = 1;
      }
    } else if (dir == 1) {
      if (v > extreme) {
        extreme = v;
      } else if (extreme - v >= threshold) {
        ++legs;
        dir = -1;
        extreme = v;
      }
    } else {
      if (v < extreme) {
        extreme = v;
      } else if (v - extreme >= threshold) {
        ++legs;
        dir = 1;
        extreme = v;
      }
    }
  }
  return legs / 2;
}

namespace {

int keypoint_index(const TaskSpec& spec, const std::string& name) {
  auto it = std::find(spec.keypoint_names.begin(), spec.keypoint_names.end(), name);
  if (it == spec.keypoint_names.end())
    throw Error(ErrorCode::InvalidArgument, "unknown keypoint '" + name + "'");
  return static_cast<int>(it - spec.keypoint_names.begin());
}

bool check_pick_place(const TaskSpec& spec, const std::vector<SceneObject>& objects) {
  const SceneObject& obj = find_object(objects, spec.success.object_id);
  const SceneObject& target = find_object(objects, spec.success.target_object_id);
  const Vec3 goal = target.point_world(spec.success.target_offset);
  const double horizontal = (obj.pose.position - goal).head<2>().norm();
  if (horizontal > spec.success.radius) return false;
  const double bottom = obj.pose.position.z() - obj.bottom_offset();
  const double rest = support_height(objects, obj.pose.position.x(), obj.pose.position.y(),
                                     spec.table_height, obj.id);
  return std::abs(bottom - rest) <= 0.015;
}

bool check_wipe(const TaskSpec& spec, const EpisodeTrace& trace,
                const std::vector<SceneObject>& objects) {
  const SceneObject& obj = find_object(objects, spec.success.object_id);
  const int kp = keypoint_index(spec, spec.success.keypoint);
  const double band = 0.03;  // "on the counter": bottom within 3 cm of support
  const auto on_counter = [&](const TraceStep& s) {
    const double bottom = s.keypoints[static_cast<size_t>(kp)].z() - obj.bottom_offset();
    return bottom - spec.table_height <= band;
  };
  double path = 0.0;
  for (size_t i = 1; i < trace.size(); ++i) {
    if (!on_counter(trace[i - 1]) || !on_counter(trace[i])) continue;
    path += (trace[i].keypoints[static_cast<size_t>(kp)] -
             trace[i - 1].keypoints[static_cast<size_t>(kp)])
                .head<2>()
                .norm();
  }
  return path >= spec.success.threshold;
}

}  // namespace

bool check_success(const TaskSpec& spec, const EpisodeTrace& trace,
                   const std::vector<SceneObject>& final_objects) {
  if (trace.empty()) throw Error(ErrorCode::InvalidArgument, "empty episode trace");
  const SuccessSpec& s = spec.success;
  if (s.predicate == "pick_place") return check_pick_place(spec, final_objects);
  if (s.predicate == "drawer" || s.predicate == "fridge")
    return find_object(final_objects, s.object_id).articulation_value >= s.threshold;
  if (s.predicate == "close_angle")
    return find_object(final_objects, s.object_id).articulation_value < s.threshold;
  if (s.predicate == "hammer") {
    const int kp = keypoint_index(spec, s.keypoint);
    std::vector<double> z;
    z.reserve(trace.size());
    for (const auto& step : trace) z.push_back(step.keypoints[static_cast<size_t>(kp)].z());
    return count_swings(z, s.threshold) >= s.count;
  }
  if (s.predicate == "wipe") return check_wipe(spec, trace, final_objects);
  if (s.predicate == "track") return trace.back().t >= spec.horizon;
  throw Error(ErrorCode::InvalidArgument, "unknown success predicate '" + s.predicate + "'");
}

void save_trace_jsonl(const std::string& path, const TaskSpec& spec, const EpisodeTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  for (const auto& step : trace) {
    ordered_json record;
    record["t"] = step.t;
    record["wrist"] = {step.wrist_position.x(), step.wrist_position.y(), step.wrist_position.z()};
    ordered_json kps = ordered_json::array();
    for (const auto& kp : step.keypoints) kps.push_back({kp.x(), kp.y(), kp.z()});
    record["keypoints"] = std::move(kps);
    ordered_json objs = ordered_json::array();
    for (size_t i = 0; i < step.object_positions.size(); ++i) {
      ordered_json o;
      o["id"] = i < spec.objects.size() ? spec.objects[i].id : std::to_string(i);
      o["position"] = {step.object_positions[i].x(), step.object_positions[i].y(),
                       step.object_positions[i].z()};
      o["articulation"] = step.articulation[i];
      objs.push_back(std::move(o));
    }
    record["objects"] = std::move(objs);
    record["contacts"] = step.contacts;
    record["reward"] = step.reward;
    record["terminated"] = step.terminated;
    out << record.dump() << "\n";
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Env

namespace {

bool interactable(const SceneObject& obj) {
  return obj.movable || obj.welded_to_wrist || obj.articulation.kind != ArticulationKind::None;
}

}  // namespace

Env::Env(TaskSpec spec, EnvOptions options, uint64_t seed, uint64_t stream)
    : spec_(std::move(spec)), options_(options), hand_(HandModel::standard()), seed_(seed),
      stream_(stream) {
  spec_.validate();
  if (options_.smoothing_gamma < 0.0 || options_.smoothing_gamma >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "smoothing gamma must be in [0, 1)");
  reset(0);
}

void Env::reset(uint64_t episode) {
  Rng rng(seed_, stream_ ^ (0x517cc1b727220a95ull * (episode + 1)));
  dynamics_multiplier_ = options_.randomize_dynamics ? rng.uniform(0.3, 3.0) : 1.0;
  step_rng_ = Rng(seed_, stream_ ^ (0xd1b54a32d192ed03ull * (episode + 1)));

  state_ = SimState{};
  state_.objects = spec_.objects;
  state_.attachments.assign(state_.objects.size(), Attachment{});

  for (const auto& range : spec_.randomization) {
    for (auto& obj : state_.objects) {
      if (obj.id != range.object_id) continue;
      for (int d = 0; d < 3; ++d) obj.pose.position[d] = rng.uniform(range.lo[d], range.hi[d]);
      obj.pose.euler = Vec3(0.0, 0.0, rng.uniform(range.yaw_lo, range.yaw_hi));
    }
  }

  Pose6 wrist = spec_.wrist_home;
  for (int d = 0; d < 3; ++d)
    wrist.position[d] += rng.uniform(-spec_.wrist_jitter[d], spec_.wrist_jitter[d]);
  wrist.euler = spec_.reference_euler;
  state_.set_wrist(wrist);
  state_.q.tail(HandModel::kFingerDof) = hand_.finger_lower;  // fully open
  initial_wrist_ = wrist;

  for (size_t i = 0; i < state_.objects.size(); ++i) {
    auto& obj = state_.objects[i];
    if (obj.welded_to_wrist) {
      // The spec pose is the wrist-relative weld offset.
      state_.attachments[i].attached = true;
      state_.attachments[i].wrist_to_object = spec_.objects[i].pose;
      state_.attachments[i].last_wrist_position = wrist.position;
      obj.pose = compose(wrist, state_.attachments[i].wrist_to_object);
    } else if (obj.movable) {
      obj.pose.position.z() =
          support_height(state_.objects, obj.pose.position.x(), obj.pose.position.y(),
                         spec_.table_height, obj.id) +
          obj.bottom_offset();
    }
  }

  update_fingertips();
  update_keypoints();
  state_.initial_keypoints = state_.current_keypoints;
  trace_.clear();
  record_trace(contacts());
}

int Env::contacts() const {
  int count = 0;
  for (int f = 0; f < HandModel::kFingers; ++f) {
    const Vec3 tip = state_.fingertip_poses.row(f).head<3>();
    for (const auto& obj : state_.objects) {
      if (!interactable(obj)) continue;
      if (obj.signed_distance(tip) <= options_.contact_distance) {
        ++count;
        break;  // a fingertip counts once no matter how many objects it touches
      }
    }
  }
  return count;
}

void Env::update_fingertips() {
  const Pose6 wrist = state_.wrist();
  const VecX finger_q = state_.q.tail(HandModel::kFingerDof);
  for (int f = 0; f < HandModel::kFingers; ++f)
    state_.fingertip_poses.row(f) = hand_.fingertip_pose(wrist, finger_q, f).transpose();
}

void Env::update_keypoints() {
  state_.current_keypoints.clear();
  state_.current_keypoints.reserve(spec_.keypoint_names.size());
  for (const auto& name : spec_.keypoint_names) {
    for (const auto& obj : state_.objects) {
      if (obj.has_anchor(name)) {
        state_.current_keypoints.push_back(obj.anchor_world(name));
        break;
      }
    }
  }
}

void Env::record_trace(int contact_count) {
  TraceStep step;
  step.t = state_.t;
  step.wrist_position = state_.q.head<3>();
  step.keypoints = state_.current_keypoints;
  step.object_positions.reserve(state_.objects.size());
  step.articulation.reserve(state_.objects.size());
  for (const auto& obj : state_.objects) {
    step.object_positions.push_back(obj.pose.position);
    step.articulation.push_back(obj.articulation_value);
  }
  step.contacts = contact_count;
  trace_.push_back(std::move(step));
}

void Env::annotate_trace(double reward, bool terminated) {
  if (trace_.empty()) throw Error(ErrorCode::OutOfRange, "no trace record to annotate");
  trace_.back().reward = reward;
  trace_.back().terminated = terminated;
}

StepResult Env::step(const VecX& action, const Vec3& plan_wrist_position) {
  const int expected = HandModel::kWristDof + spec_.finger_arity;
  if (action.size() != expected)
    throw Error(ErrorCode::DimensionMismatch,
                "action size " + std::to_string(action.size()) + ", expected " +
                    std::to_string(expected));
  if (!action.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite action");
  if (state_.t >= spec_.horizon)
    throw Error(ErrorCode::OutOfRange, "episode horizon exhausted; reset the environment");

  // Clip, expand to per-joint commands, and smooth in normalized space.
  const FingerCoupling coupling = hand_.coupling(spec_.finger_arity);
  VecX full = VecX::Zero(HandModel::kDof);
  for (int d = 0; d < HandModel::kWristDof; ++d) full[d] = std::clamp(action[d], -1.0, 1.0);
  for (int j = 0; j < HandModel::kFingerDof; ++j) {
    const double cmd = action[HandModel::kWristDof + coupling.group_of[static_cast<size_t>(j)]];
    full[HandModel::kWristDof + j] = std::clamp(cmd, -1.0, 1.0);
  }
  if (options_.smoothing) {
    const double g = options_.smoothing_gamma;
    state_.smoothed = g * state_.smoothed + (1.0 - g) * full;
  } else {
    state_.smoothed = full;
  }

  // The controller tracks a transiently perturbed copy of the smoothed command
  // when action noise is on; the stored smoothing state stays clean.
  VecX control = state_.smoothed;
  if (options_.action_noise_std > 0.0) {
    for (int d = 0; d < HandModel::kDof; ++d)
      control[d] = std::clamp(control[d] + step_rng_.normal(0.0, options_.action_noise_std),
                              -1.0, 1.0);
  }

  // Wrist target from the smoothed residual, kept above the table.
  const Pose6 wrist_target =
      clamp_table(compose_wrist(control.head<6>(), plan_wrist_position,
                                spec_.reference_euler, options_.residual_scale),
                  spec_.table_height, options_.table_margin);

  const VecX q_prev = state_.q;
  const double mult = dynamics_multiplier_;

  // Translation: move up to the rate limit, landing exactly on the target
  // when it is within reach (zero-residual tracking must be bit-exact).
  const double lin_rate = options_.wrist_linear_rate * mult;
  const Vec3 lin_delta = wrist_target.position - state_.q.head<3>();
  if (lin_delta.norm() <= lin_rate) {
    state_.q.head<3>() = wrist_target.position;
  } else {
    state_.q.head<3>() += lin_delta * (lin_rate / lin_delta.norm());
  }
  // Rotation: per-axis shortest-path steps with the same exact-landing rule.
  const double ang_rate = options_.wrist_angular_rate * mult;
  for (int d = 0; d < 3; ++d) {
    const double diff = wrap_angle(wrist_target.euler[d] - state_.q[3 + d]);
    if (std::abs(diff) <= ang_rate) {
      state_.q[3 + d] = wrist_target.euler[d];
    } else {
      state_.q[3 + d] = wrap_angle(state_.q[3 + d] + (diff > 0.0 ? ang_rate : -ang_rate));
    }
  }

  // Fingers: group commands map linearly onto joint limits.
  VecX group_cmd = VecX::Zero(coupling.group_count());
  for (int j = 0; j < HandModel::kFingerDof; ++j)
    group_cmd[coupling.group_of[static_cast<size_t>(j)]] = control[HandModel::kWristDof + j];
  const VecX finger_target = finger_targets(coupling, group_cmd);
  const double finger_rate = options_.finger_rate * mult;
  for (int j = 0; j < HandModel::kFingerDof; ++j) {
    const int qi = HandModel::kWristDof + j;
    const double diff = finger_target[j] - state_.q[qi];
    if (std::abs(diff) <= finger_rate) {
      state_.q[qi] = finger_target[j];
    } else {
      state_.q[qi] += diff > 0.0 ? finger_rate : -finger_rate;
    }
    state_.q[qi] = std::clamp(state_.q[qi], hand_.finger_lower[j], hand_.finger_upper[j]);
  }

  state_.qd = (state_.q - q_prev) * 60.0;
  update_fingertips();

  const Pose6 wrist_now = state_.wrist();
  const double close_cmd =
      ((control.tail(HandModel::kFingerDof).array() + 1.0) / 2.0).mean();

  // Carry attached objects and drive attached articulations.
  for (size_t i = 0; i < state_.objects.size(); ++i) {
    auto& obj = state_.objects[i];
    auto& att = state_.attachments[i];
    if (obj.welded_to_wrist) {
      obj.pose = compose(wrist_now, att.wrist_to_object);
      continue;
    }
    if (!att.attached) continue;
    switch (obj.articulation.kind) {
      case ArticulationKind::None:
        obj.pose = compose(wrist_now, att.wrist_to_object);
        break;
      case ArticulationKind::Prismatic: {
        const Vec3 axis_world = obj.pose.rotation() * obj.articulation.axis.normalized();
        const double ds = (wrist_now.position - att.last_wrist_position).dot(axis_world);
        obj.articulation_value =
            std::clamp(obj.articulation_value + ds, obj.articulation.lower, obj.articulation.upper);
        att.last_wrist_position = wrist_now.position;
        break;
      }
      case ArticulationKind::Revolute: {
        const Vec3 axis_world = obj.pose.rotation() * obj.articulation.axis.normalized();
        const Vec3 pivot_world = obj.pose.apply(obj.articulation.pivot);
        Vec3 radial = wrist_now.position - pivot_world;
        radial -= axis_world * radial.dot(axis_world);
        const double r = radial.norm();
        if (r > 1e-6) {
          const Vec3 tangent = axis_world.cross(radial / r);
          const double dtheta =
              (wrist_now.position - att.last_wrist_position).dot(tangent) / r;
          obj.articulation_value = std::clamp(obj.articulation_value + dtheta,
                                              obj.articulation.lower, obj.articulation.upper);
        }
        att.last_wrist_position = wrist_now.position;
        break;
      }
      case ArticulationKind::RevoluteSqueeze: {
        // Squeezing beyond the grasp threshold closes the tool; relaxing lets
        // it spring back while still held.
        const double drive = std::clamp((close_cmd - 0.55) / 0.35, 0.0, 1.0);
        const double target =
            obj.articulation.upper + (obj.articulation.lower - obj.articulation.upper) * drive;
        const double max_step = options_.squeeze_rate * mult;
        const double diff = target - obj.articulation_value;
        obj.articulation_value += std::clamp(diff, -max_step, max_step);
        att.last_wrist_position = wrist_now.position;
        break;
      }
    }
  }

  // Free objects settle instantly onto whatever is under them.
  for (size_t i = 0; i < state_.objects.size(); ++i) {
    auto& obj = state_.objects[i];
    if (!obj.movable || obj.welded_to_wrist || state_.attachments[i].attached) continue;
    obj.pose.position.z() =
        support_height(state_.objects, obj.pose.position.x(), obj.pose.position.y(),
                       spec_.table_height, obj.id) +
        obj.bottom_offset();
  }

  // Grasp transitions, evaluated on the settled configuration.
  for (size_t i = 0; i < state_.objects.size(); ++i) {
    auto& obj = state_.objects[i];
    auto& att = state_.attachments[i];
    if (obj.welded_to_wrist || !interactable(obj)) continue;
    if (!att.attached) {
      int near = 0;
      for (int f = 0; f < HandModel::kFingers; ++f) {
        const Vec3 tip = state_.fingertip_poses.row(f).head<3>();
        if (obj.signed_distance(tip) <= options_.contact_distance) ++near;
      }
      if (near >= 2 && close_cmd > options_.close_threshold) {
        att.attached = true;
        att.last_wrist_position = wrist_now.position;
        if (obj.articulation.kind == ArticulationKind::None && obj.movable)
          att.wrist_to_object = compose(invert(wrist_now), obj.pose);
      }
    } else if (close_cmd < options_.close_threshold) {
      att.attached = false;
    }
  }

  update_keypoints();
  state_.t += 1;
  const int contact_count = contacts();
  record_trace(contact_count);
  return {contact_count, state_.current_keypoints};
}

// ---------------------------------------------------------------------------
// TaskSpec JSON files

namespace {

ordered_json vec3_json(const Vec3& v) { return ordered_json{v.x(), v.y(), v.z()}; }

Vec3 vec3_from(const ordered_json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw schema_error(std::string(what) + " must be a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

ordered_json pose_json(const Pose6& p) {
  return ordered_json{{"position", vec3_json(p.position)}, {"euler", vec3_json(p.euler)}};
}

Pose6 pose_from(const ordered_json& j) {
  Pose6 p;
  p.position = vec3_from(j.at("position"), "pose.position");
  p.euler = vec3_from(j.at("euler"), "pose.euler");
  return p;
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Box:
      return "box";
    case ShapeKind::Cylinder:
      return "cylinder";
    case ShapeKind::Sphere:
      return "sphere";
  }
  return "box";
}

ShapeKind shape_from_name(const std::string& name) {
  if (name == "box") return ShapeKind::Box;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "sphere") return ShapeKind::Sphere;
  throw schema_error("unknown shape '" + name + "'");
}

const char* articulation_name(ArticulationKind k) {
  switch (k) {
    case ArticulationKind::None:
      return "none";
    case ArticulationKind::Prismatic:
      return "prismatic";
    case ArticulationKind::Revolute:
      return "revolute";
    case ArticulationKind::RevoluteSqueeze:
      return "revolute_squeeze";
  }
  return "none";
}

ArticulationKind articulation_from_name(const std::string& name) {
  if (name == "none") return ArticulationKind::None;
  if (name == "prismatic") return ArticulationKind::Prismatic;
  if (name == "revolute") return ArticulationKind::Revolute;
  if (name == "revolute_squeeze") return ArticulationKind::RevoluteSqueeze;
  throw schema_error("unknown articulation kind '" + name + "'");
}

}  // namespace

std::string emit_task_spec(const TaskSpec& spec, int indent) {
  ordered_json j;
  j["id"] = spec.id;
  j["instruction"] = spec.instruction;
  j["keypoints"] = spec.keypoint_names;
  j["finger_arity"] = spec.finger_arity;
  j["delta_init"] = spec.delta_init;
  j["horizon"] = spec.horizon;
  j["table_height"] = spec.table_height;
  j["reference_euler"] = vec3_json(spec.reference_euler);
  j["wrist_home"] = pose_json(spec.wrist_home);
  j["wrist_jitter"] = vec3_json(spec.wrist_jitter);
  ordered_json objs = ordered_json::array();
  for (const auto& obj : spec.objects) {
    ordered_json o;
    o["id"] = obj.id;
    o["shape"] = shape_name(obj.shape);
    o["dims"] = vec3_json(obj.dims);
    o["pose"] = pose_json(obj.pose);
    ordered_json anchors = ordered_json::object();
    for (const auto& [name, offset] : obj.anchors) anchors[name] = vec3_json(offset);
    o["anchors"] = std::move(anchors);
    o["articulation"] = ordered_json{{"kind", articulation_name(obj.articulation.kind)},
                                     {"axis", vec3_json(obj.articulation.axis)},
                                     {"pivot", vec3_json(obj.articulation.pivot)},
                                     {"split_normal", vec3_json(obj.articulation.split_normal)},
                                     {"lower", obj.articulation.lower},
                                     {"upper", obj.articulation.upper}};
    o["articulation_value"] = obj.articulation_value;
    o["movable"] = obj.movable;
    o["is_support"] = obj.is_support;
    o["welded_to_wrist"] = obj.welded_to_wrist;
    o["color"] = vec3_json(obj.color);
    objs.push_back(std::move(o));
  }
  j["objects"] = std::move(objs);
  ordered_json ranges = ordered_json::array();
  for (const auto& r : spec.randomization)
    ranges.push_back(ordered_json{{"object_id", r.object_id},
                                  {"lo", vec3_json(r.lo)},
                                  {"hi", vec3_json(r.hi)},
                                  {"yaw_lo", r.yaw_lo},
                                  {"yaw_hi", r.yaw_hi}});
  j["randomization"] = std::move(ranges);
  j["success"] = ordered_json{{"predicate", spec.success.predicate},
                              {"object_id", spec.success.object_id},
                              {"target_object_id", spec.success.target_object_id},
                              {"keypoint", spec.success.keypoint},
                              {"target_offset", vec3_json(spec.success.target_offset)},
                              {"radius", spec.success.radius},
                              {"threshold", spec.success.threshold},
                              {"count", spec.success.count}};
  return j.dump(indent);
}

TaskSpec parse_task_spec(const std::string& text) {
  TaskSpec spec;
  try {
    const ordered_json j = ordered_json::parse(text);
    spec.id = j.at("id").get<std::string>();
    spec.instruction = j.at("instruction").get<std::string>();
    spec.keypoint_names = j.at("keypoints").get<std::vector<std::string>>();
    spec.finger_arity = j.at("finger_arity").get<int>();
    spec.delta_init = j.at("delta_init").get<double>();
    spec.horizon = j.at("horizon").get<int>();
    spec.table_height = j.at("table_height").get<double>();
    spec.reference_euler = vec3_from(j.at("reference_euler"), "reference_euler");
    spec.wrist_home = pose_from(j.at("wrist_home"));
    spec.wrist_jitter = vec3_from(j.at("wrist_jitter"), "wrist_jitter");
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<std::string>();
      obj.shape = shape_from_name(o.at("shape").get<std::string>());
      obj.dims = vec3_from(o.at("dims"), "dims");
      obj.pose = pose_from(o.at("pose"));
      for (const auto& [name, offset] : o.at("anchors").items())
        obj.anchors[name] = vec3_from(offset, "anchor");
      const auto& art = o.at("articulation");
      obj.articulation.kind = articulation_from_name(art.at("kind").get<std::string>());
      obj.articulation.axis = vec3_from(art.at("axis"), "articulation.axis");
      obj.articulation.pivot = vec3_from(art.at("pivot"), "articulation.pivot");
      obj.articulation.split_normal = vec3_from(art.at("split_normal"), "articulation.split_normal");
      obj.articulation.lower = art.at("lower").get<double>();
      obj.articulation.upper = art.at("upper").get<double>();
      obj.articulation_value = o.at("articulation_value").get<double>();
      obj.movable = o.at("movable").get<bool>();
      obj.is_support = o.at("is_support").get<bool>();
      obj.welded_to_wrist = o.at("welded_to_wrist").get<bool>();
      obj.color = vec3_from(o.at("color"), "color");
      spec.objects.push_back(std::move(obj));
    }
    for (const auto& r : j.at("randomization")) {
      PoseRange range;
      range.object_id = r.at("object_id").get<std::string>();
      range.lo = vec3_from(r.at("lo"), "randomization.lo");
      range.hi = vec3_from(r.at("hi"), "randomization.hi");
      range.yaw_lo = r.at("yaw_lo").get<double>();
      range.yaw_hi = r.at("yaw_hi").get<double>();
      spec.randomization.push_back(std::move(range));
    }
    const auto& s = j.at("success");
    spec.success.predicate = s.at("predicate").get<std::string>();
    spec.success.object_id = s.at("object_id").get<std::string>();
    spec.success.target_object_id = s.at("target_object_id").get<std::string>();
    spec.success.keypoint = s.at("keypoint").get<std::string>();
    spec.success.target_offset = vec3_from(s.at("target_offset"), "success.target_offset");
    spec.success.radius = s.at("radius").get<double>();
    spec.success.threshold = s.at("threshold").get<double>();
    spec.success.count = s.at("count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("task spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void save_task_spec(const TaskSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << emit_task_spec(spec) << "\n";
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

TaskSpec load_task_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_task_spec(buffer.str());
}

}  // namespace dxs
