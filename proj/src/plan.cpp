#include "plan.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dxs {

using ordered_json = nlohmann::ordered_json;

const char* plan_source_name(PlanSource s) {
  switch (s) {
    case PlanSource::Vlm: return "vlm";
    case PlanSource::Oracle: return "oracle";
    case PlanSource::Prerecorded: return "prerecorded";
    case PlanSource::Reduced: return "reduced";
  }
  return "oracle";
}

PlanSource plan_source_from_name(const std::string& name) {
  if (name == "vlm") return PlanSource::Vlm;
  if (name == "oracle") return PlanSource::Oracle;
  if (name == "prerecorded") return PlanSource::Prerecorded;
  if (name == "reduced") return PlanSource::Reduced;
  throw Error(ErrorCode::InvalidArgument, "unknown plan source: " + name);
}

int WaypointSequence::track_index(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw Error(ErrorCode::InvalidArgument, "no track named '" + name + "'");
}

void WaypointSequence::validate() const {
  if (names.size() != points.size())
    throw Error(ErrorCode::InvalidArgument, "track name/point count mismatch");
  if (std::count(names.begin(), names.end(), kHandTrack) != 1)
    throw Error(ErrorCode::InvalidArgument, "'hand' track must be present exactly once");
  if (waypoint_count() < 2)
    throw Error(ErrorCode::InvalidArgument, "waypoint sequences need at least 2 waypoints");
  for (size_t i = 0; i < points.size(); ++i) {
    if (static_cast<int>(points[i].size()) != waypoint_count())
      throw Error(ErrorCode::InvalidArgument, "ragged waypoint tracks");
    for (const Vec3& p : points[i])
      if (!p.allFinite())
        throw Error(ErrorCode::InvalidArgument, "non-finite waypoint in track '" + names[i] + "'");
  }
}

namespace {

Vec3 sample_polyline(const std::vector<Vec3>& pts, double s) {
  // s in [0, pts.size()-1], parameterized by waypoint index.
  const int last = static_cast<int>(pts.size()) - 1;
  if (s <= 0.0) return pts.front();
  if (s >= last) return pts.back();
  const int i = static_cast<int>(std::floor(s));
  const double f = s - i;
  return (1.0 - f) * pts[i] + f * pts[i + 1];
}

std::vector<Vec3> resample_track(const std::vector<Vec3>& pts, int horizon, InterpolationMode mode) {
  const int n = static_cast<int>(pts.size());
  std::vector<Vec3> out(horizon);
  if (mode == InterpolationMode::WaypointIndex) {
    for (int j = 0; j < horizon; ++j) {
      if (j == 0) {
        out[j] = pts.front();
      } else if (j == horizon - 1) {
        out[j] = pts.back();
      } else {
        out[j] = sample_polyline(pts, static_cast<double>(j) * (n - 1) / (horizon - 1));
      }
    }
    return out;
  }
  // Arc length: uniform distance along the track's own polyline. Tracks with
  // (near) zero length fall back to index parameterization.
  std::vector<double> cum(n, 0.0);
  for (int i = 1; i < n; ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  if (cum.back() < 1e-12) return resample_track(pts, horizon, InterpolationMode::WaypointIndex);
  for (int j = 0; j < horizon; ++j) {
    if (j == 0) {
      out[j] = pts.front();
      continue;
    }
    if (j == horizon - 1) {
      out[j] = pts.back();
      continue;
    }
    const double target = cum.back() * j / (horizon - 1);
    int i = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin()) - 1;
    i = std::clamp(i, 0, n - 2);
    const double seg = cum[i + 1] - cum[i];
    const double f = seg > 0.0 ? (target - cum[i]) / seg : 0.0;
    out[j] = (1.0 - f) * pts[i] + f * pts[i + 1];
  }
  return out;
}

}  // namespace

KeypointPlan interpolate(const WaypointSequence& w, int horizon, InterpolationMode mode) {
  w.validate();
  if (horizon < w.waypoint_count())
    throw Error(ErrorCode::TooShort, "horizon " + std::to_string(horizon) +
                                         " shorter than waypoint count " +
                                         std::to_string(w.waypoint_count()));
  KeypointPlan plan;
  plan.horizon = horizon;
  plan.waypoint_count = w.waypoint_count();
  const int hand = w.hand_index();
  plan.wrist = resample_track(w.points[hand], horizon, mode);
  for (size_t i = 0; i < w.names.size(); ++i) {
    if (static_cast<int>(i) == hand) continue;
    plan.keypoint_names.push_back(w.names[i]);
    plan.keypoints.push_back(resample_track(w.points[i], horizon, mode));
  }
  return plan;
}

PlanWindow window(const KeypointPlan& plan, int t) {
  if (t < 1 || t > plan.horizon)
    throw Error(ErrorCode::OutOfRange, "window step " + std::to_string(t) + " outside [1, T]");
  PlanWindow out;
  out.keypoints.resize(plan.keypoints.size());
  for (int j = 0; j < kPlanWindowSize; ++j) {
    // round(linspace(t, T, 15)), collapsing to t when t == T.
    const double s = t + static_cast<double>(plan.horizon - t) * j / (kPlanWindowSize - 1);
    const int idx = static_cast<int>(std::llround(s)) - 1;  // to 0-based
    out.wrist[j] = plan.wrist[idx];
    for (size_t i = 0; i < plan.keypoints.size(); ++i) out.keypoints[i][j] = plan.keypoints[i][idx];
  }
  return out;
}

namespace {

double require_number(const ordered_json& j, const std::string& ctx) {
  if (!j.is_number())
    throw schema_error("non-numeric coordinate in " + ctx);
  return j.get<double>();
}

Vec3 parse_point(const ordered_json& j, const std::string& ctx) {
  if (!j.is_object()) throw schema_error(ctx + " is not an object");
  if (j.size() != 3 || !j.contains("x") || !j.contains("y") || !j.contains("z"))
    throw schema_error(ctx + " must contain exactly the keys x, y, z");
  return Vec3(require_number(j.at("x"), ctx), require_number(j.at("y"), ctx),
              require_number(j.at("z"), ctx));
}

}  // namespace

WaypointSequence parse_plan_json(const std::string& text,
                                 const std::vector<std::string>& expected_names) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("plan is not valid JSON: ") + e.what());
  }
  if (!doc.is_array() || doc.empty()) throw schema_error("plan must be a nonempty JSON array");

  WaypointSequence w;
  if (!expected_names.empty()) {
    w.names = expected_names;
  } else {
    const ordered_json& first = doc.front();
    if (!first.is_object()) throw schema_error("waypoint entries must be objects");
    for (auto it = first.begin(); it != first.end(); ++it)
      if (it.key() != "waypoint_num") w.names.push_back(it.key());
  }
  if (std::count(w.names.begin(), w.names.end(), kHandTrack) != 1)
    throw schema_error("plan must contain a 'hand' track exactly once");
  w.points.resize(w.names.size());

  int expected_num = 0;
  for (const ordered_json& entry : doc) {
    if (!entry.is_object()) throw schema_error("waypoint entries must be objects");
    if (!entry.contains("waypoint_num")) throw schema_error("missing waypoint_num");
    const ordered_json& num = entry.at("waypoint_num");
    if (!num.is_number_integer())
      throw schema_error("waypoint_num must be an integer");
    if (num.get<int>() != expected_num)
      throw schema_error("waypoint_num values must be consecutive from 0 (expected " +
                         std::to_string(expected_num) + ", got " + std::to_string(num.get<int>()) + ")");
    if (entry.size() != w.names.size() + 1)
      throw schema_error("waypoint " + std::to_string(expected_num) +
                         " has an unexpected key count");
    for (auto it = entry.begin(); it != entry.end(); ++it) {
      if (it.key() == "waypoint_num") continue;
      if (std::find(w.names.begin(), w.names.end(), it.key()) == w.names.end())
        throw schema_error("unknown key '" + it.key() + "' in waypoint " +
                           std::to_string(expected_num));
    }
    for (size_t i = 0; i < w.names.size(); ++i) {
      if (!entry.contains(w.names[i]))
        throw schema_error("waypoint " + std::to_string(expected_num) + " missing key '" +
                           w.names[i] + "'");
      w.points[i].push_back(
          parse_point(entry.at(w.names[i]), "'" + w.names[i] + "' at waypoint " +
                                                std::to_string(expected_num)));
    }
    ++expected_num;
  }
  w.validate();
  return w;
}

std::string emit_plan_json(const WaypointSequence& w, int indent) {
  w.validate();
  ordered_json arr = ordered_json::array();
  for (int j = 0; j < w.waypoint_count(); ++j) {
    ordered_json entry;
    entry["waypoint_num"] = j;
    for (size_t i = 0; i < w.names.size(); ++i) {
      const Vec3& p = w.points[i][j];
      entry[w.names[i]] = {{"x", p.x()}, {"y", p.y()}, {"z", p.z()}};
    }
    arr.push_back(std::move(entry));
  }
  return arr.dump(indent);
}

std::vector<PlanViolation> validate_plan(
    const KeypointPlan& plan, const Aabb& workspace,
    const std::vector<std::pair<std::string, std::string>>& rigid_pairs,
    const PlanValidationOptions& opts) {
  std::vector<PlanViolation> out;

  auto check_bounds = [&](const std::string& name, const std::vector<Vec3>& track) {
    for (int t = 0; t < plan.horizon; ++t) {
      if (!workspace.contains(track[t])) {
        std::ostringstream msg;
        msg << "'" << name << "' leaves the workspace at step " << t;
        out.push_back({PlanViolation::Kind::Workspace, name, t, msg.str()});
        break;  // one report per track
      }
    }
  };
  for (size_t i = 0; i < plan.keypoints.size(); ++i)
    check_bounds(plan.keypoint_names[i], plan.keypoints[i]);
  check_bounds(kHandTrack, plan.wrist);

  auto track_of = [&](const std::string& name) -> const std::vector<Vec3>* {
    for (size_t i = 0; i < plan.keypoint_names.size(); ++i)
      if (plan.keypoint_names[i] == name) return &plan.keypoints[i];
    return nullptr;
  };
  for (const auto& [a, b] : rigid_pairs) {
    const auto* ta = track_of(a);
    const auto* tb = track_of(b);
    if (ta == nullptr || tb == nullptr) continue;
    const double d0 = ((*ta)[0] - (*tb)[0]).norm();
    for (int t = 1; t < plan.horizon; ++t) {
      const double d = ((*ta)[t] - (*tb)[t]).norm();
      if (std::abs(d - d0) > opts.rigid_pair_tolerance) {
        std::ostringstream msg;
        msg << "rigid pair (" << a << ", " << b << ") drifts " << std::abs(d - d0)
            << " m at step " << t;
        out.push_back({PlanViolation::Kind::RigidPair, a + "/" + b, t, msg.str()});
        break;
      }
    }
  }

  // Grasp step: first step where any keypoint has moved off its start.
  int grasp_step = -1;
  for (int t = 0; t < plan.horizon && grasp_step < 0; ++t)
    for (const auto& track : plan.keypoints)
      if ((track[t] - track[0]).norm() > opts.grasp_motion_epsilon) {
        grasp_step = t;
        break;
      }
  if (grasp_step >= 0 && !plan.keypoints.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& track : plan.keypoints)
      best = std::min(best, (plan.wrist[grasp_step] - track[grasp_step]).norm());
    if (best > opts.grasp_proximity_radius) {
      std::ostringstream msg;
      msg << "wrist is " << best << " m from the nearest keypoint at grasp step " << grasp_step;
      out.push_back({PlanViolation::Kind::GraspProximity, kHandTrack, grasp_step, msg.str()});
    }
  }
  return out;
}

std::string emit_plan_bundle(const PlanBundle& b) {
  ordered_json doc;
  doc["task"] = b.task_id;
  doc["camera_snapshot"] = b.camera_snapshot_id;
  doc["interpolation_T"] = b.horizon;
  doc["meta"] = {{"source", plan_source_name(b.source)}, {"n", b.waypoints.waypoint_count()}};
  doc["waypoints"] = ordered_json::parse(emit_plan_json(b.waypoints));
  return doc.dump(2);
}

PlanBundle parse_plan_bundle(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("plan bundle is not valid JSON: ") + e.what());
  }
  PlanBundle b;
  try {
    b.task_id = doc.at("task").get<std::string>();
    b.camera_snapshot_id = doc.at("camera_snapshot").get<std::string>();
    b.horizon = doc.at("interpolation_T").get<int>();
    b.source = plan_source_from_name(doc.at("meta").at("source").get<std::string>());
    b.waypoints = parse_plan_json(doc.at("waypoints").dump());
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("malformed plan bundle: ") + e.what());
  }
  return b;
}

void save_plan_bundle(const PlanBundle& b, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  f << emit_plan_bundle(b) << "\n";
}

PlanBundle load_plan_bundle(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_plan_bundle(ss.str());
}

}  // namespace dxs
