#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "plan.hpp"
#include "rng.hpp"

using namespace dxs;

namespace {

WaypointSequence make_sequence(const std::vector<std::string>& names,
                               const std::vector<std::vector<Vec3>>& tracks) {
  WaypointSequence w;
  w.names = names;
  w.points = tracks;
  return w;
}

// Distance from point to segment [a, b].
double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-300) return (p - a).norm();
  const double f = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + f * ab)).norm();
}

// Brute-force oracle: point must lie on one of the polyline segments.
double polyline_deviation(const Vec3& p, const std::vector<Vec3>& waypoints) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < waypoints.size(); ++i)
    best = std::min(best, segment_distance(p, waypoints[i], waypoints[i + 1]));
  return best;
}

WaypointSequence random_sequence(Rng& rng, int k, int n) {
  std::vector<std::string> names;
  std::vector<std::vector<Vec3>> tracks;
  for (int i = 0; i < k; ++i) names.push_back("kp" + std::to_string(i));
  names.push_back("hand");
  for (int i = 0; i <= k; ++i) {
    std::vector<Vec3> track;
    for (int j = 0; j < n; ++j)
      track.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 1));
    tracks.push_back(track);
  }
  return make_sequence(names, tracks);
}

}  // namespace

TEST_CASE("two-waypoint line interpolates to evenly spaced samples") {
  auto w = make_sequence({"hand"}, {{Vec3(0, 0, 0), Vec3(1, 0, 0)}});
  // A lone hand track is not a valid plan (k = 0 keypoints is fine, but the
  // hand must be present exactly once) -- this one is valid.
  KeypointPlan plan = interpolate(w, 5);
  REQUIRE(plan.horizon == 5);
  const double expected[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int j = 0; j < 5; ++j) CHECK(plan.wrist[j].x() == doctest::Approx(expected[j]).epsilon(1e-15));
}

TEST_CASE("interpolation with T == n returns the waypoints unchanged") {
  Rng rng(3);
  WaypointSequence w = random_sequence(rng, 2, 7);
  KeypointPlan plan = interpolate(w, 7);
  for (int j = 0; j < 7; ++j) {
    CHECK((plan.wrist[j] - w.points[2][j]).norm() == 0.0);
    CHECK((plan.keypoints[0][j] - w.points[0][j]).norm() == 0.0);
    CHECK((plan.keypoints[1][j] - w.points[1][j]).norm() == 0.0);
  }
}

TEST_CASE("interpolated points lie exactly on the waypoint polyline") {
  auto w = make_sequence(
      {"kp0", "hand"},
      {{Vec3(0, 0, 0), Vec3(1, 2, 0), Vec3(0, 4, 1)}, {Vec3(1, 1, 1), Vec3(2, 0, 1), Vec3(3, 3, 0)}});
  KeypointPlan plan = interpolate(w, 101);
  for (int j = 0; j < 101; ++j) {
    CHECK(polyline_deviation(plan.keypoints[0][j], w.points[0]) < 1e-12);
    CHECK(polyline_deviation(plan.wrist[j], w.points[1]) < 1e-12);
  }
  CHECK((plan.keypoints[0][0] - w.points[0].front()).norm() == 0.0);
  CHECK((plan.keypoints[0][100] - w.points[0].back()).norm() == 0.0);
}

TEST_CASE("interpolation rejects horizons shorter than the waypoint count") {
  Rng rng(5);
  WaypointSequence w = random_sequence(rng, 1, 10);
  try {
    interpolate(w, 9);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("arc-length mode spaces samples uniformly by distance") {
  // Two segments of very different lengths.
  auto w = make_sequence({"hand"}, {{Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(1.0, 0, 0)}});
  KeypointPlan plan = interpolate(w, 11, InterpolationMode::ArcLength);
  for (int j = 0; j < 11; ++j) CHECK(plan.wrist[j].x() == doctest::Approx(0.1 * j).epsilon(1e-12));
}

TEST_CASE("window saturates at the terminal step") {
  Rng rng(7);
  KeypointPlan plan = interpolate(random_sequence(rng, 2, 5), 40);
  PlanWindow win = window(plan, 40);
  for (int j = 0; j < kPlanWindowSize; ++j) {
    CHECK((win.wrist[j] - plan.wrist[39]).norm() == 0.0);
    CHECK((win.keypoints[0][j] - plan.keypoints[0][39]).norm() == 0.0);
  }
}

TEST_CASE("window over exactly 15 remaining steps is the identity slice") {
  Rng rng(9);
  KeypointPlan plan = interpolate(random_sequence(rng, 1, 3), 15);
  PlanWindow win = window(plan, 1);
  for (int j = 0; j < 15; ++j) CHECK((win.wrist[j] - plan.wrist[j]).norm() == 0.0);
}

TEST_CASE("window indices match an independent linspace rounding oracle") {
  Rng rng(11);
  KeypointPlan plan = interpolate(random_sequence(rng, 1, 4), 150);
  PlanWindow win = window(plan, 1);
  for (int j = 0; j < 15; ++j) {
    const long double s = 1.0L + (150.0L - 1.0L) * j / 14.0L;
    const int idx = static_cast<int>(std::llround(static_cast<double>(s))) - 1;
    CHECK((win.wrist[j] - plan.wrist[idx]).norm() == 0.0);
  }
}

TEST_CASE("window rejects out-of-range steps") {
  Rng rng(13);
  KeypointPlan plan = interpolate(random_sequence(rng, 1, 2), 10);
  CHECK_THROWS_AS(window(plan, 0), Error);
  CHECK_THROWS_AS(window(plan, 11), Error);
}

static const char* kMoveAppleJson = R"([
  {"waypoint_num": 0,
   "apple": {"x": 0.0, "y": 0.0, "z": 0.0},
   "cutting board": {"x": -0.01, "y": -0.38, "z": -0.05},
   "hand": {"x": -0.07, "y": -0.09, "z": 0.26}},
  {"waypoint_num": 1,
   "apple": {"x": 0.0, "y": 0.0, "z": 0.1},
   "cutting board": {"x": -0.01, "y": -0.38, "z": -0.05},
   "hand": {"x": -0.02, "y": -0.03, "z": 0.2}}
])";

TEST_CASE("the Move Apple trajectory schema parses to k=2 plus hand") {
  WaypointSequence w = parse_plan_json(kMoveAppleJson);
  CHECK(w.keypoint_count() == 2);
  CHECK(w.names == std::vector<std::string>{"apple", "cutting board", "hand"});
  CHECK(w.waypoint_count() == 2);
  CHECK(w.points[1][0].y() == doctest::Approx(-0.38));
}

TEST_CASE("emit-parse round trip is stable") {
  WaypointSequence w = parse_plan_json(kMoveAppleJson);
  std::string text = emit_plan_json(w);
  WaypointSequence again = parse_plan_json(text);
  CHECK(again.names == w.names);
  for (size_t i = 0; i < w.points.size(); ++i)
    for (int j = 0; j < w.waypoint_count(); ++j)
      CHECK((again.points[i][j] - w.points[i][j]).norm() == 0.0);
  CHECK(emit_plan_json(again) == text);  // byte-stable on the second cycle
}

TEST_CASE("random sequences round-trip bit-exactly through JSON") {
  Rng rng(15);
  for (int iter = 0; iter < 10; ++iter) {
    WaypointSequence w = random_sequence(rng, 2, 6);
    WaypointSequence back = parse_plan_json(emit_plan_json(w));
    for (size_t i = 0; i < w.points.size(); ++i)
      for (int j = 0; j < 6; ++j) CHECK((back.points[i][j] - w.points[i][j]).norm() == 0.0);
  }
}

TEST_CASE("schema violations raise SchemaError") {
  auto expect_schema_error = [](const std::string& text) {
    try {
      parse_plan_json(text);
      FAIL("expected SchemaError for: ", text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Schema);
    }
  };
  // Non-consecutive waypoint_num.
  expect_schema_error(R"([
    {"waypoint_num": 0, "hand": {"x": 0, "y": 0, "z": 0}},
    {"waypoint_num": 2, "hand": {"x": 0, "y": 0, "z": 0}}])");
  // Missing key in the second waypoint.
  expect_schema_error(R"([
    {"waypoint_num": 0, "apple": {"x": 0, "y": 0, "z": 0}, "hand": {"x": 0, "y": 0, "z": 0}},
    {"waypoint_num": 1, "hand": {"x": 0, "y": 0, "z": 0}}])");
  // Non-numeric coordinate.
  expect_schema_error(R"([
    {"waypoint_num": 0, "hand": {"x": "a", "y": 0, "z": 0}},
    {"waypoint_num": 1, "hand": {"x": 0, "y": 0, "z": 0}}])");
  // Unknown key appearing later.
  expect_schema_error(R"([
    {"waypoint_num": 0, "hand": {"x": 0, "y": 0, "z": 0}},
    {"waypoint_num": 1, "hand": {"x": 0, "y": 0, "z": 0}, "extra": {"x": 0, "y": 0, "z": 0}}])");
  // No hand track at all.
  expect_schema_error(R"([
    {"waypoint_num": 0, "apple": {"x": 0, "y": 0, "z": 0}},
    {"waypoint_num": 1, "apple": {"x": 0, "y": 0, "z": 0}}])");
  // Not an array.
  expect_schema_error(R"({"waypoint_num": 0})");
}

TEST_CASE("validate_plan reports rigid pair drift") {
  auto w = make_sequence(
      {"handle", "head", "hand"},
      {{Vec3(0, 0, 0), Vec3(0, 0, 0.2)},
       {Vec3(0.15, 0, 0), Vec3(0.30, 0, 0.2)},  // drifts 0.15 m from the handle
       {Vec3(0, 0, 0.1), Vec3(0, 0, 0.3)}});
  KeypointPlan plan = interpolate(w, 20);
  Aabb ws{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  auto violations = validate_plan(plan, ws, {{"handle", "head"}});
  REQUIRE(!violations.empty());
  bool found = false;
  for (const auto& v : violations)
    if (v.kind == PlanViolation::Kind::RigidPair) found = true;
  CHECK(found);
}

TEST_CASE("a static in-bounds plan has no workspace violations") {
  auto w = make_sequence({"kp0", "hand"},
                         {{Vec3(0, 0, 0), Vec3(0, 0, 0)}, {Vec3(0, 0, 0), Vec3(0, 0, 0)}});
  KeypointPlan plan = interpolate(w, 10);
  Aabb ws{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  CHECK(validate_plan(plan, ws, {}).empty());
}

TEST_CASE("validate_plan reports out-of-workspace keypoints") {
  auto w = make_sequence({"kp0", "hand"},
                         {{Vec3(0, 0, 0), Vec3(5, 0, 0)}, {Vec3(0, 0, 0.1), Vec3(0.4, 0, 0.1)}});
  KeypointPlan plan = interpolate(w, 10);
  Aabb ws{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  auto violations = validate_plan(plan, ws, {});
  bool found = false;
  for (const auto& v : violations)
    if (v.kind == PlanViolation::Kind::Workspace && v.track == "kp0") found = true;
  CHECK(found);
}

TEST_CASE("validate_plan flags a wrist far from every keypoint at the grasp step") {
  auto w = make_sequence({"kp0", "hand"},
                         {{Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(0.3, 0, 0)},
                          {Vec3(0.9, 0.9, 0.9), Vec3(0.9, 0.9, 0.9), Vec3(0.9, 0.9, 0.9)}});
  KeypointPlan plan = interpolate(w, 30);
  Aabb ws{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  auto violations = validate_plan(plan, ws, {});
  bool found = false;
  for (const auto& v : violations)
    if (v.kind == PlanViolation::Kind::GraspProximity) found = true;
  CHECK(found);
}

TEST_CASE("plan bundles round-trip through their file format") {
  Rng rng(21);
  PlanBundle b;
  b.task_id = "move_apple";
  b.camera_snapshot_id = "snap-0001";
  b.waypoints = random_sequence(rng, 2, 4);
  b.horizon = 60;
  b.source = PlanSource::Reduced;
  PlanBundle back = parse_plan_bundle(emit_plan_bundle(b));
  CHECK(back.task_id == b.task_id);
  CHECK(back.camera_snapshot_id == b.camera_snapshot_id);
  CHECK(back.horizon == 60);
  CHECK(back.source == PlanSource::Reduced);
  for (size_t i = 0; i < b.waypoints.points.size(); ++i)
    for (int j = 0; j < 4; ++j)
      CHECK((back.waypoints.points[i][j] - b.waypoints.points[i][j]).norm() == 0.0);
}
