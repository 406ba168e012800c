#include "planner.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

namespace dxs {

using ordered_json = nlohmann::ordered_json;

namespace {

TaskPrompt make_prompt(std::string task_id, std::string instruction,
                       std::vector<std::string> keypoint_names, std::string keypoint_template,
                       std::string trajectory_template) {
  TaskPrompt p;
  p.task_id = std::move(task_id);
  p.instruction = std::move(instruction);
  p.keypoint_names = std::move(keypoint_names);
  p.keypoint_template = std::move(keypoint_template);
  p.trajectory_template = std::move(trajectory_template);
  return p;
}

}  // namespace

TaskPrompt task_prompt(const std::string& task_id) {
  if (task_id == "move_apple") {
    return make_prompt(
        task_id, "pick up an apple and put it on a cutting board", {"apple", "cutting board"},
        R"__(Point to the apple and the cutting board in the image.
The answer should follow the json format: [{"name": "apple", "point": [...]}, {"name": "cutting board", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to pick up an apple and put it on a cutting board.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the apple.
Then grasp the apple and lift it up.
Finally move the apple on the cutting board and put it down.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the apple is {init:apple}.
The initial position of the cutting board is {init:cutting board}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"apple": {"x": float, "y": float, "z": float},
"cutting board": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "move_bottle") {
    return make_prompt(
        task_id, "move a bottle to the target position on the kitchen counter", {"bottle", "point"},
        R"__(Point to the water bottle on the kitchen counter, and pinpoint a point on the kitchen counter to the right of the kitchen sink in the image.
The answer should follow the json format: [{"name": "bottle", "point": [...]}, {"name": "point", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to move a bottle to the target position called "point" on the kitchen counter.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the bottle.
Then grasp the bottle and lift it up.
Finally move the bottle to the target position called "point" and put it down.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the bottle is {init:bottle}.
The initial position of the point is {init:point}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"bottle": {"x": float, "y": float, "z": float},
"point": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "open_drawer") {
    return make_prompt(
        task_id, "pull open a cabinet drawer", {"handle"},
        R"__(Point to the handle of the top cabinet drawer in the image.
The answer should follow the json format: [{"name": "handle", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to pull open a cabinet drawer.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the handle of the drawer.
Then grasp the handle.
Finally pull the drawer open by at least 30cm.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the handle is {init:handle}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"handle": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "open_fridge") {
    return make_prompt(
        task_id, "open a refrigerator door", {"handle"},
        R"__(Point to the top handle of the refrigerator door in the image.
The answer should follow the json format: [{"name": "handle", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to open a refrigerator door.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
The refrigerator faces in x direction.
The y axis points to the right, and the z axis points up.
First figure out how large the door is.
Then describe how the x and y coordinates of the handle change as the door is opened.
Now move the robot hand towards the handle.
Then grasp the handle.
Finally fully open the door.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the handle is {init:handle}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"handle": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "hammer_nail") {
    return make_prompt(
        task_id, "make a hammering motion", {"handle", "head"},
        R"__(Point to the brown handle and the metal head of the hammer in the image.
The answer should follow the json format: [{"name": "handle", "point": [...]}, {"name": "head", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to make a hammering motion.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the handle.
Then grasp the handle.
Finally hit on the kitchen counter 3 times.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the handle is {init:handle}.
The initial position of the head is {init:head}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"handle": {"x": float, "y": float, "z": float},
"head": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "wipe_sponge") {
    return make_prompt(
        task_id, "wipe a kitchen counter with a sponge", {"sponge"},
        R"__(Point to the green yellow sponge on the kitchen counter in the image.
The answer should follow the json format: [{"name": "sponge", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to wipe a kitchen counter with a sponge.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the sponge.
Then grasp the sponge.
Finally wipe the kitchen counter with the sponge.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the sponge is {init:sponge}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"sponge": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "close_scissors") {
    return make_prompt(
        task_id, "close a pair of scissors", {"loop 1", "loop 2"},
        R"__(Point to the two loops of the scissors in the image.
The answer should follow the json format: [{"name": "loop 1", "point": [...]}, {"name": "loop 2", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to close a pair of scissors.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the scissors.
Then grasp the two loops and entirely close the scissors.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the loop 1 is {init:loop 1}.
The initial position of the loop 2 is {init:loop 2}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"loop 1": {"x": float, "y": float, "z": float},
"loop 2": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "close_pliers") {
    return make_prompt(
        task_id, "close a plier", {"handle left", "handle right"},
        R"__(Point to the left and right handles of the plier in the image.
The answer should follow the json format: [{"name": "handle left", "point": [...]}, {"name": "handle right", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to close a plier.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand towards the plier.
Then grasp the left and right handles and entirely close the plier.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the handle left is {init:handle left}.
The initial position of the handle right is {init:handle right}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"handle left": {"x": float, "y": float, "z": float},
"handle right": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  if (task_id == "track_toy") {
    return make_prompt(
        task_id, "move a marker puck along a smooth path", {"marker"},
        R"__(Point to the orange marker puck in the image.
The answer should follow the json format: [{"name": "marker", "point": [...]}]
The points are in [y, x] format normalized to 0-1000.)__",
        R"__(Your are controlling a robot hand to move a marker puck along a smooth path.
The coordinates are measured in meters.
The x axis is forward, the y axis is left and the z axis is up.
First move the robot hand above the marker.
Then sweep the marker along a gentle closed curve.
Describe a very realistic trajectory of exactly {n} waypoints.
Use code to generate the output.
The initial position of the marker is {init:marker}.
The initial position of the hand is {init:hand}.
Use the following json format for the trajectory:
[{
"waypoint_num": 0,
"marker": {"x": float, "y": float, "z": float},
"hand": {"x": float, "y": float, "z": float}
} ...]
**Only** print the json output. Do **not** print anything else with the code.)__");
  }
  throw Error(ErrorCode::UnknownTask, "no prompt for task '" + task_id + "'");
}

const char* backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Remote: return "remote";
    case BackendKind::Replay: return "replay";
    case BackendKind::Oracle: return "oracle";
  }
  return "oracle";
}

BackendKind backend_kind_from_name(const std::string& name) {
  if (name == "remote") return BackendKind::Remote;
  if (name == "replay") return BackendKind::Replay;
  if (name == "oracle") return BackendKind::Oracle;
  throw Error(ErrorCode::InvalidArgument, "unknown backend kind '" + name + "'");
}

namespace {

std::string format_position(const Vec3& p) {
  // Two decimals, as in the prompt examples; negative zero is normalized so
  // the text is a pure function of the rounded value.
  const auto canon = [](double v) {
    const double r = std::round(v * 100.0) / 100.0;
    return r == 0.0 ? 0.0 : r;
  };
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%.2f, %.2f, %.2f]", canon(p.x()), canon(p.y()), canon(p.z()));
  return buf;
}

void replace_all(std::string& text, const std::string& needle, const std::string& value) {
  size_t at = 0;
  while ((at = text.find(needle, at)) != std::string::npos) {
    text.replace(at, needle.size(), value);
    at += value.size();
  }
}

// Translates a world-frame plan into the prompt's relative frame (first
// keypoint of this task at the origin).
WaypointSequence to_relative(const WaypointSequence& seq, const std::string& first_keypoint) {
  WaypointSequence rel = seq;
  const Vec3 origin = seq.points[static_cast<size_t>(seq.track_index(first_keypoint))][0];
  for (auto& track : rel.points)
    for (Vec3& p : track) p -= origin;
  return rel;
}

std::string base64_encode(const std::vector<uint8_t>& data) {
  static const char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  for (size_t i = 0; i < data.size(); i += 3) {
    uint32_t word = static_cast<uint32_t>(data[i]) << 16;
    if (i + 1 < data.size()) word |= static_cast<uint32_t>(data[i + 1]) << 8;
    if (i + 2 < data.size()) word |= static_cast<uint32_t>(data[i + 2]);
    out.push_back(table[(word >> 18) & 63]);
    out.push_back(table[(word >> 12) & 63]);
    out.push_back(i + 1 < data.size() ? table[(word >> 6) & 63] : '=');
    out.push_back(i + 2 < data.size() ? table[word & 63] : '=');
  }
  return out;
}

std::mutex cache_write_mutex;

}  // namespace

uint64_t request_fingerprint(const std::string& prompt_text, const RenderImage& image,
                             const std::string& model, double temperature, int thinking_budget) {
  std::string buffer;
  buffer.reserve(prompt_text.size() + image.rgb.size() + 64);
  buffer += prompt_text;
  buffer += '\x1f';
  buffer += model;
  buffer += '\x1f';
  char num[48];
  std::snprintf(num, sizeof(num), "%.6g|%d|%dx%d", temperature, thinking_budget, image.width,
                image.height);
  buffer += num;
  buffer += '\x1f';
  buffer.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return fnv1a64(buffer);
}

std::string fingerprint_hex(uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

PlannerBackend::PlannerBackend(BackendConfig config) : config_(std::move(config)) {
  switch (config_.kind) {
    case BackendKind::Remote: {
      if (config_.url.empty() || config_.model.empty())
        throw Error(ErrorCode::InvalidArgument, "remote backend needs a url and a model name");
      const char* cred = std::getenv(config_.credential_env.c_str());
      if (cred == nullptr || *cred == '\0')
        throw Error(ErrorCode::Backend, "credential environment variable '" +
                                            config_.credential_env + "' is not set");
      break;
    }
    case BackendKind::Replay:
      if (config_.cache_dir.empty())
        throw Error(ErrorCode::InvalidArgument, "replay backend needs a cache directory");
      break;
    case BackendKind::Oracle:
      break;
  }
}

std::string PlannerBackend::replay_lookup(uint64_t fingerprint) const {
  const std::filesystem::path path =
      std::filesystem::path(config_.cache_dir) / (fingerprint_hex(fingerprint) + ".json");
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Backend,
                "replay cache miss: no recorded response " + path.string());
  std::stringstream body;
  body << in.rdbuf();
  ordered_json doc;
  try {
    doc = ordered_json::parse(body.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Backend, "corrupt replay record " + path.string() + ": " + e.what());
  }
  if (!doc.contains("text") || !doc.at("text").is_string())
    throw Error(ErrorCode::Backend, "replay record " + path.string() + " has no text field");
  return doc.at("text").get<std::string>();
}

std::string PlannerBackend::remote_call(const std::string& prompt_text, const RenderImage& image,
                                        double temperature, uint64_t fingerprint) const {
  const char* cred = std::getenv(config_.credential_env.c_str());
  if (cred == nullptr || *cred == '\0')
    throw Error(ErrorCode::Backend,
                "credential environment variable '" + config_.credential_env + "' is not set");

  const size_t scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "endpoint url needs a scheme: " + config_.url);
  const size_t path_start = config_.url.find('/', scheme_end + 3);
  const std::string base =
      path_start == std::string::npos ? config_.url : config_.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config_.url.substr(path_start);

  ordered_json payload;
  payload["model"] = config_.model;
  payload["temperature"] = temperature;
  payload["thinking_budget"] = config_.thinking_budget;
  payload["prompt"] = prompt_text;
  payload["image"] = {{"width", image.width},
                      {"height", image.height},
                      {"ppm_base64", base64_encode(encode_ppm(image))}};

  httplib::Client client(base);
  client.set_connection_timeout(30, 0);
  client.set_read_timeout(300, 0);
  const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + cred}};
  auto res = client.Post(path, headers, payload.dump(), "application/json");
  if (!res)
    throw Error(ErrorCode::Backend,
                "endpoint unreachable: " + httplib::to_string(res.error()) + " (" + base + ")");
  if (res->status != 200)
    throw Error(ErrorCode::Backend,
                "endpoint returned status " + std::to_string(res->status) + ": " + res->body);
  ordered_json doc;
  try {
    doc = ordered_json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Backend, std::string("endpoint returned invalid JSON: ") + e.what());
  }
  if (!doc.contains("text") || !doc.at("text").is_string())
    throw Error(ErrorCode::Backend, "endpoint response has no text field");
  const std::string text = doc.at("text").get<std::string>();

  if (!config_.cache_dir.empty()) {
    // Record for replay; writes are serialized, last writer wins.
    std::lock_guard<std::mutex> lock(cache_write_mutex);
    std::filesystem::create_directories(config_.cache_dir);
    ordered_json record;
    record["fingerprint"] = fingerprint_hex(fingerprint);
    record["model"] = config_.model;
    record["temperature"] = temperature;
    record["thinking_budget"] = config_.thinking_budget;
    record["prompt"] = prompt_text;
    record["text"] = text;
    const std::filesystem::path out_path =
        std::filesystem::path(config_.cache_dir) / (fingerprint_hex(fingerprint) + ".json");
    std::ofstream out(out_path);
    out << record.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::Io, "failed recording response to " + out_path.string());
  }
  return text;
}

std::string PlannerBackend::complete(const std::string& prompt_text, const RenderImage& image,
                                     double temperature) const {
  const uint64_t fp = request_fingerprint(prompt_text, image, config_.model, temperature,
                                          config_.thinking_budget);
  switch (config_.kind) {
    case BackendKind::Replay: return replay_lookup(fp);
    case BackendKind::Remote: return remote_call(prompt_text, image, temperature, fp);
    case BackendKind::Oracle:
      throw Error(ErrorCode::Backend,
                  "the oracle backend synthesizes plans directly; use detect/generate");
  }
  throw Error(ErrorCode::Internal, "unhandled backend kind");
}

std::string render_keypoint_prompt(const TaskPrompt& prompt) { return prompt.keypoint_template; }

std::string render_trajectory_prompt(const PlannerRequest& req,
                                     const std::vector<Vec3>& keypoints) {
  if (keypoints.size() != req.prompt.keypoint_names.size())
    throw Error(ErrorCode::DimensionMismatch,
                "keypoint count does not match the prompt's keypoint set");
  if (req.waypoint_target < 2)
    throw Error(ErrorCode::InvalidArgument, "waypoint target must be at least 2");
  std::string text = req.prompt.trajectory_template;
  replace_all(text, "{n}", std::to_string(req.waypoint_target));
  const Vec3 origin = keypoints[0];
  for (size_t i = 0; i < keypoints.size(); ++i)
    replace_all(text, "{init:" + req.prompt.keypoint_names[i] + "}",
                format_position(keypoints[i] - origin));
  replace_all(text, "{init:hand}", format_position(req.initial_wrist.position - origin));
  if (text.find("{init:") != std::string::npos || text.find("{n}") != std::string::npos)
    throw Error(ErrorCode::Internal, "unfilled placeholder in trajectory template");

  for (size_t e = 0; e < req.examples.size(); ++e) {
    text += "\n\nExample of a successful trajectory from a previous attempt:\n";
    text += emit_plan_json(to_relative(req.examples[e], req.prompt.keypoint_names[0]));
  }
  return text;
}

namespace {

// Accepts raw JSON or JSON inside the first fenced code block.
std::string extract_json_payload(const std::string& response) {
  const auto first_non_space = response.find_first_not_of(" \t\r\n");
  if (first_non_space == std::string::npos) throw schema_error("empty response");
  if (response[first_non_space] == '[' || response[first_non_space] == '{') {
    const auto last = response.find_last_not_of(" \t\r\n");
    return response.substr(first_non_space, last - first_non_space + 1);
  }
  size_t fence = response.find("```");
  if (fence == std::string::npos)
    throw schema_error("response is neither raw JSON nor a fenced block");
  fence += 3;
  // Skip a language tag such as ```json.
  const size_t line_end = response.find('\n', fence);
  if (line_end == std::string::npos) throw schema_error("unterminated code fence");
  const std::string tag = response.substr(fence, line_end - fence);
  const size_t body_start = tag.find_first_of("[{") == std::string::npos ? line_end + 1 : fence;
  const size_t close = response.find("```", body_start);
  if (close == std::string::npos) throw schema_error("unterminated code fence");
  std::string body = response.substr(body_start, close - body_start);
  const auto lo = body.find_first_not_of(" \t\r\n");
  if (lo == std::string::npos) throw schema_error("empty code fence");
  const auto hi = body.find_last_not_of(" \t\r\n");
  return body.substr(lo, hi - lo + 1);
}

// The response an ideal detector would give: finds each keypoint's marker
// overlay by its exact color and reports the center in normalized [y, x].
std::string oracle_keypoint_response(const PlannerRequest& req) {
  ordered_json arr = ordered_json::array();
  const RenderImage& img = req.image;
  for (size_t i = 0; i < req.prompt.keypoint_names.size(); ++i) {
    const auto color = keypoint_marker_color(static_cast<int>(i));
    double sum_u = 0.0;
    double sum_v = 0.0;
    int count = 0;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        const size_t at = (static_cast<size_t>(v) * img.width + u) * 3;
        if (img.rgb[at] == color[0] && img.rgb[at + 1] == color[1] && img.rgb[at + 2] == color[2]) {
          sum_u += u;
          sum_v += v;
          ++count;
        }
      }
    }
    if (count == 0)
      throw Error(ErrorCode::Backend, "oracle detector: marker for keypoint '" +
                                          req.prompt.keypoint_names[i] + "' is not visible");
    const long y = std::lround((sum_v / count + 0.5) * 1000.0 / img.height);
    const long x = std::lround((sum_u / count + 0.5) * 1000.0 / img.width);
    ordered_json entry;
    entry["name"] = req.prompt.keypoint_names[i];
    entry["point"] = {y, x};
    arr.push_back(std::move(entry));
  }
  return arr.dump();
}

std::vector<DetectedKeypoint> parse_keypoint_response(const std::string& response,
                                                      const PlannerRequest& req) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(extract_json_payload(response));
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("keypoint response is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw schema_error("keypoint response must be a JSON array");

  struct RawPoint {
    double y = 0.0;
    double x = 0.0;
  };
  std::vector<std::pair<std::string, RawPoint>> raw;
  for (const ordered_json& entry : doc) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("point"))
      throw schema_error("keypoint entries need a name and a point");
    if (!entry.at("name").is_string()) throw schema_error("keypoint name must be a string");
    const ordered_json& pt = entry.at("point");
    if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
      throw schema_error("keypoint point must be a [y, x] pair");
    raw.emplace_back(entry.at("name").get<std::string>(),
                     RawPoint{pt[0].get<double>(), pt[1].get<double>()});
  }
  if (raw.size() != req.prompt.keypoint_names.size())
    throw schema_error("keypoint response has " + std::to_string(raw.size()) + " entries, expected " +
                       std::to_string(req.prompt.keypoint_names.size()));

  std::vector<DetectedKeypoint> out;
  for (const std::string& name : req.prompt.keypoint_names) {
    const auto it = std::find_if(raw.begin(), raw.end(),
                                 [&](const auto& kv) { return kv.first == name; });
    if (it == raw.end()) throw schema_error("keypoint response missing '" + name + "'");
    const RawPoint& p = it->second;
    if (p.y < 0.0 || p.y > 1000.0 || p.x < 0.0 || p.x > 1000.0)
      throw schema_error("keypoint '" + name + "' is outside the 0-1000 range");
    NormalizedKeypoint2D norm;
    norm.name = name;
    norm.y_norm = static_cast<int>(std::lround(p.y));
    norm.x_norm = static_cast<int>(std::lround(p.x));
    DetectedKeypoint kp;
    kp.name = name;
    kp.pixel = denormalize(norm, req.camera);
    kp.position = backproject_pixel(req.camera, kp.pixel);
    out.push_back(std::move(kp));
  }
  return out;
}

// Remote responses get schema_retries fresh attempts; deterministic backends
// would only repeat themselves.
template <typename Fn>
auto with_schema_retry(const PlannerBackend& backend, Fn&& attempt) {
  const int tries =
      backend.config().kind == BackendKind::Remote ? 1 + backend.config().schema_retries : 1;
  for (int i = 0; i < tries; ++i) {
    try {
      return attempt();
    } catch (const Error& e) {
      const bool retryable =
          e.code() == ErrorCode::Schema || e.code() == ErrorCode::CountMismatch;
      if (!retryable || i + 1 == tries) throw;
    }
  }
  throw Error(ErrorCode::Internal, "unreachable retry state");
}

}  // namespace

std::vector<DetectedKeypoint> detect_keypoints(const PlannerBackend& backend,
                                               const PlannerRequest& req) {
  if (req.prompt.keypoint_names.empty())
    throw Error(ErrorCode::InvalidArgument, "prompt has no keypoints");
  if (req.image.width != req.camera.width || req.image.height != req.camera.height)
    throw Error(ErrorCode::DimensionMismatch, "image and camera dimensions differ");
  if (backend.config().kind == BackendKind::Oracle)
    return parse_keypoint_response(oracle_keypoint_response(req), req);
  const std::string prompt_text = render_keypoint_prompt(req.prompt);
  return with_schema_retry(backend, [&] {
    const std::string response =
        backend.complete(prompt_text, req.image, backend.config().keypoint_temperature);
    return parse_keypoint_response(response, req);
  });
}

WaypointSequence generate_waypoints(const PlannerBackend& backend, const PlannerRequest& req,
                                    const std::vector<DetectedKeypoint>& keypoints) {
  if (keypoints.size() != req.prompt.keypoint_names.size())
    throw Error(ErrorCode::DimensionMismatch, "detected keypoints do not match the prompt");
  std::vector<Vec3> positions;
  positions.reserve(keypoints.size());
  for (const DetectedKeypoint& kp : keypoints) positions.push_back(kp.position);

  WaypointSequence seq;
  if (backend.config().kind == BackendKind::Oracle) {
    seq = oracle_plan(req.prompt.task_id, positions, req.initial_wrist.position,
                      req.waypoint_target);
  } else {
    const std::string prompt_text = render_trajectory_prompt(req, positions);
    std::vector<std::string> expected = req.prompt.keypoint_names;
    expected.push_back(kHandTrack);
    seq = with_schema_retry(backend, [&] {
      const std::string response =
          backend.complete(prompt_text, req.image, backend.config().trajectory_temperature);
      WaypointSequence parsed = parse_plan_json(extract_json_payload(response), expected);
      if (parsed.waypoint_count() != req.waypoint_target)
        throw Error(ErrorCode::CountMismatch,
                    "plan has " + std::to_string(parsed.waypoint_count()) + " waypoints, expected " +
                        std::to_string(req.waypoint_target));
      return parsed;
    });
    // Back to the world frame: the prompt placed the first keypoint at the
    // origin.
    for (auto& track : seq.points)
      for (Vec3& p : track) p += positions[0];
  }

  if (seq.waypoint_count() != req.waypoint_target)
    throw Error(ErrorCode::CountMismatch,
                "plan has " + std::to_string(seq.waypoint_count()) + " waypoints, expected " +
                    std::to_string(req.waypoint_target));
  // Anchor: waypoint 0 of every keypoint track is its detected 3D position.
  for (size_t i = 0; i < req.prompt.keypoint_names.size(); ++i)
    seq.points[static_cast<size_t>(seq.track_index(req.prompt.keypoint_names[i]))][0] =
        positions[i];
  seq.validate();
  return seq;
}

WaypointSequence plan_task(const PlannerBackend& backend, const PlannerRequest& req) {
  return generate_waypoints(backend, req, detect_keypoints(backend, req));
}

namespace {

Vec3 lerp(const Vec3& a, const Vec3& b, double f) { return (1.0 - f) * a + f * b; }

// Piecewise-linear schedule sampling: keys are (fraction, point) with the
// first at 0 and the last at 1.
std::vector<Vec3> sample_keys(const std::vector<std::pair<double, Vec3>>& keys, int n) {
  std::vector<Vec3> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    if (t <= keys.front().first) {
      out[static_cast<size_t>(i)] = keys.front().second;
      continue;
    }
    if (t >= keys.back().first) {
      out[static_cast<size_t>(i)] = keys.back().second;
      continue;
    }
    size_t j = 0;
    while (j + 1 < keys.size() && keys[j + 1].first < t) ++j;
    const double span = keys[j + 1].first - keys[j].first;
    const double f = span > 0.0 ? (t - keys[j].first) / span : 1.0;
    out[static_cast<size_t>(i)] = lerp(keys[j].second, keys[j + 1].second, f);
  }
  return out;
}

using Keys = std::vector<std::pair<double, Vec3>>;

WaypointSequence assemble(const TaskPrompt& prompt, const std::vector<Keys>& keypoint_keys,
                          const Keys& hand_keys, int n) {
  WaypointSequence seq;
  seq.names = prompt.keypoint_names;
  seq.names.push_back(kHandTrack);
  for (const Keys& keys : keypoint_keys) seq.points.push_back(sample_keys(keys, n));
  seq.points.push_back(sample_keys(hand_keys, n));
  seq.validate();
  return seq;
}

// Rotate p about the vertical axis through pivot.
Vec3 rotate_about_z(const Vec3& pivot, const Vec3& p, double theta) {
  const Vec3 r = p - pivot;
  return pivot + Vec3(std::cos(theta) * r.x() - std::sin(theta) * r.y(),
                      std::sin(theta) * r.x() + std::cos(theta) * r.y(), r.z());
}

// Fingertip pocket of the settled half-closed hand, wrist-relative.  The
// grasp gate only engages once the smoothed close command passes one half,
// by which point the fingers have curled to the matching steady state - a
// fully open fingertip ring can never be touching anything at attach time.
// Plans therefore park the wrist so that the settled front fingertip pair
// straddles the grasp point, and dwell there while the smoothed command
// crosses the gate.
Vec3 grasp_pocket() {
  const HandModel hand = HandModel::standard();
  VecX q(HandModel::kFingerDof);
  for (int j = 0; j < HandModel::kFingerDof; ++j)
    q[j] = hand.finger_lower[j] + 0.51 * (hand.finger_upper[j] - hand.finger_lower[j]);
  const Vec3 tip = hand.fingertip_position(Pose6{}, q, 0);
  return Vec3(tip.x(), 0.0, tip.z());  // the pair sits at +- the finger base offset in y
}

// Wrist pose that lands the settled fingertip pair on the grasp point.  Round
// objects shift the pocket sideways so the pair rests on the surface instead
// of at the unreachable center.
Vec3 grasp_wrist(const Vec3& point, double radius) {
  const double b = HandModel::standard().finger_bases[0].y();
  const double shift = std::sqrt(std::max(radius * radius - b * b, 0.0));
  return point + Vec3(shift, 0.0, 0.0) - grasp_pocket();
}

// Shared schedule: approach above the grasp pose, land by kArrive, dwell
// until kGrasp so the smoothed close command can cross the gate while the
// wrist is stationary, then manipulate.
constexpr double kArrive = 0.30;
constexpr double kGrasp = 0.46;

WaypointSequence oracle_pick_place(const TaskPrompt& prompt, const Vec3& object,
                                   const Vec3& target, const Vec3& w1, int n,
                                   double object_radius, double place_height) {
  const Vec3 place = target + Vec3(0.0, 0.0, place_height);
  const Vec3 grip = grasp_wrist(object, object_radius);
  const Vec3 carry = grip - object;  // wrist-to-object offset while held
  const Vec3 lift(0.0, 0.0, 0.14);
  const Keys obj = {{0.0, object},       {kGrasp, object}, {0.58, object + lift},
                    {0.80, place + lift}, {0.92, place},    {1.0, place}};
  Keys hand = {{0.0, w1}, {0.14, grip + Vec3(0.0, 0.0, 0.15)}, {kArrive, grip}};
  for (size_t i = 1; i < obj.size(); ++i) hand.emplace_back(obj[i].first, obj[i].second + carry);
  const Keys tgt = {{0.0, target}, {1.0, target}};
  return assemble(prompt, {obj, tgt}, hand, n);
}

}  // namespace

WaypointSequence oracle_plan(const std::string& task_id, const std::vector<Vec3>& keypoints,
                             const Vec3& initial_wrist, int waypoint_count) {
  const TaskPrompt prompt = task_prompt(task_id);
  if (static_cast<int>(keypoints.size()) != prompt.keypoint_count())
    throw Error(ErrorCode::DimensionMismatch,
                "oracle plan for '" + task_id + "' expects " +
                    std::to_string(prompt.keypoint_count()) + " keypoints, got " +
                    std::to_string(keypoints.size()));
  if (waypoint_count < 2)
    throw Error(ErrorCode::InvalidArgument, "waypoint count must be at least 2");
  const int n = waypoint_count;
  const Vec3& w1 = initial_wrist;

  // Resting heights: object center over the target keypoint (apple radius
  // above the board's top anchor; bottle half-height above the counter
  // marker's top), so the final waypoint satisfies the pick-place predicate.
  if (task_id == "move_apple")
    return oracle_pick_place(prompt, keypoints[0], keypoints[1], w1, n, 0.04, 0.04);
  if (task_id == "move_bottle")
    return oracle_pick_place(prompt, keypoints[0], keypoints[1], w1, n, 0.03, 0.082);

  if (task_id == "open_drawer") {
    const Vec3 kp = keypoints[0];
    const Vec3 grip = grasp_wrist(kp, 0.0);
    const Vec3 pull(-0.32, 0.0, 0.0);
    const Keys handle = {{0.0, kp}, {kGrasp, kp}, {1.0, kp + pull}};
    const Keys hand = {{0.0, w1},
                       {0.14, grip + Vec3(0.0, 0.0, 0.12)},
                       {kArrive, grip},
                       {kGrasp, grip},
                       {1.0, grip + pull}};
    return assemble(prompt, {handle}, hand, n);
  }

  if (task_id == "open_fridge") {
    const Vec3 kp = keypoints[0];
    // Hinge location relative to the handle, from the furniture geometry
    // (the appliance is never randomized).
    const Vec3 pivot = kp + Vec3(0.025, -0.425, 0.0);
    const Vec3 grip = grasp_wrist(kp, 0.0);
    Keys handle = {{0.0, kp}, {kGrasp, kp}};
    Keys hand = {{0.0, w1}, {0.14, grip + Vec3(0.12, 0.0, 0.10)}, {kArrive, grip}, {kGrasp, grip}};
    const int arc_keys = 14;
    for (int j = 1; j <= arc_keys; ++j) {
      const double theta = 1.4 * j / arc_keys;
      const double f = kGrasp + (1.0 - kGrasp) * j / arc_keys;
      handle.emplace_back(f, rotate_about_z(pivot, kp, theta));
      hand.emplace_back(f, rotate_about_z(pivot, grip, theta));
    }
    return assemble(prompt, {handle}, hand, n);
  }

  if (task_id == "hammer_nail") {
    const Vec3 grip_kp = keypoints[0];                // handle
    const Vec3 head_offset = keypoints[1] - grip_kp;  // rigid tool geometry
    const Vec3 grip = grasp_wrist(grip_kp, 0.0);
    const Vec3 carry = grip - grip_kp;
    // Key fractions sit on the default 20-waypoint grid (j/19) so the
    // sampled track reaches the full swing amplitude.
    const double g = 1.0 / 19.0;
    Keys handle = {{0.0, grip_kp}, {9.0 * g, grip_kp}};
    for (int s = 0; s < 3; ++s) {
      handle.emplace_back((11.0 + 2.0 * s) * g, grip_kp + Vec3(0.0, 0.0, 0.10));
      handle.emplace_back((12.0 + 2.0 * s) * g, grip_kp + Vec3(0.0, 0.0, 0.01));
    }
    handle.emplace_back(1.0, grip_kp + Vec3(0.0, 0.0, 0.04));
    Keys head;
    head.reserve(handle.size());
    for (const auto& [f, p] : handle) head.emplace_back(f, p + head_offset);
    Keys hand = {{0.0, w1}, {3.0 * g, grip + Vec3(0.0, 0.0, 0.12)}, {6.0 * g, grip}};
    for (size_t i = 1; i < handle.size(); ++i)
      hand.emplace_back(handle[i].first, handle[i].second + carry);
    return assemble(prompt, {handle, head}, hand, n);
  }

  if (task_id == "wipe_sponge") {
    const Vec3 kp = keypoints[0];
    const Vec3 grip = grasp_wrist(kp, 0.0);
    const Vec3 carry = grip - kp;
    const Keys sponge = {{0.0, kp},
                         {kGrasp, kp},
                         {0.60, kp + Vec3(0.20, 0.0, 0.0)},
                         {0.74, kp + Vec3(0.20, -0.14, 0.0)},
                         {0.87, kp + Vec3(0.0, -0.14, 0.0)},
                         {1.0, kp}};
    Keys hand = {{0.0, w1}, {0.14, grip + Vec3(0.0, 0.0, 0.12)}, {kArrive, grip}};
    for (size_t i = 1; i < sponge.size(); ++i)
      hand.emplace_back(sponge[i].first, sponge[i].second + carry);
    return assemble(prompt, {sponge}, hand, n);
  }

  if (task_id == "close_scissors" || task_id == "close_pliers") {
    // Reconstruct the hinge from the two grip keypoints: the task library
    // gives the grip anchors and pivot in the tool frame, and the detected
    // keypoints are those anchors splayed by half the opening angle each
    // way, so solving the planar similarity recovers the hinge pose under
    // any randomized yaw and translation.
    const TaskSpec spec = task_library(task_id);
    const SceneObject* tool = nullptr;
    for (const auto& obj : spec.objects)
      if (obj.articulation.kind == ArticulationKind::RevoluteSqueeze) tool = &obj;
    if (tool == nullptr)
      throw Error(ErrorCode::Internal, "squeeze task '" + task_id + "' has no hinged tool");
    const double half = tool->articulation.upper / 2.0;
    const Vec3 u_a = tool->anchors.at(prompt.keypoint_names[0]) - tool->articulation.pivot;
    const Vec3 u_b = tool->anchors.at(prompt.keypoint_names[1]) - tool->articulation.pivot;
    const Vec3 open_a = rotate_about_z(Vec3::Zero(), u_a, half);
    const Vec3 open_b = rotate_about_z(Vec3::Zero(), u_b, -half);
    const Vec3 d_local = open_b - open_a;
    const Vec3 d_world = keypoints[1] - keypoints[0];
    const double yaw =
        std::atan2(d_world.y(), d_world.x()) - std::atan2(d_local.y(), d_local.x());
    const Vec3 pivot = keypoints[0] - rotate_about_z(Vec3::Zero(), open_a, yaw);

    const Vec3 mid = 0.5 * (keypoints[0] + keypoints[1]);
    const Vec3 grip = grasp_wrist(mid, 0.0);
    const Keys hand = {
        {0.0, w1}, {0.14, grip + Vec3(0.0, 0.0, 0.12)}, {kArrive, grip}, {1.0, grip}};
    Keys first = {{0.0, keypoints[0]}, {kGrasp, keypoints[0]}};
    Keys second = {{0.0, keypoints[1]}, {kGrasp, keypoints[1]}};
    const int close_keys = 6;
    for (int j = 1; j <= close_keys; ++j) {
      const double s = static_cast<double>(j) / close_keys;
      const double f = kGrasp + (0.88 - kGrasp) * s;
      first.emplace_back(f, pivot + rotate_about_z(Vec3::Zero(), u_a, yaw + half * (1.0 - s)));
      second.emplace_back(f, pivot + rotate_about_z(Vec3::Zero(), u_b, yaw - half * (1.0 - s)));
    }
    first.emplace_back(1.0, pivot + rotate_about_z(Vec3::Zero(), u_a, yaw));
    second.emplace_back(1.0, pivot + rotate_about_z(Vec3::Zero(), u_b, yaw));
    return assemble(prompt, {first, second}, hand, n);
  }

  if (task_id == "track_toy") {
    const Vec3 offset = keypoints[0] - w1;  // carried marker, constant offset
    Keys hand;
    const int segments = 8;
    for (int j = 0; j <= segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      const Vec3 p = w1 + Vec3(0.06 * (std::cos(phi) - 1.0), 0.06 * std::sin(phi),
                               0.02 * std::sin(2.0 * phi));
      hand.emplace_back(static_cast<double>(j) / segments, p);
    }
    Keys marker;
    marker.reserve(hand.size());
    for (const auto& [f, p] : hand) marker.emplace_back(f, p + offset);
    return assemble(prompt, {marker}, hand, n);
  }

  throw Error(ErrorCode::UnknownTask, "no oracle plan for task '" + task_id + "'");
}

PlannerRequest refine_fewshot(const std::vector<WaypointSequence>& history,
                              const PlannerRequest& req, int max_examples) {
  if (max_examples < 0)
    throw Error(ErrorCode::InvalidArgument, "max_examples must be nonnegative");
  PlannerRequest out = req;
  out.examples.clear();
  const size_t m = std::min(history.size(), static_cast<size_t>(max_examples));
  for (size_t i = history.size() - m; i < history.size(); ++i) {
    history[i].validate();
    out.examples.push_back(history[i]);
  }
  return out;
}

Aabb task_workspace(const std::string& task_id) {
  task_prompt(task_id);  // UnknownTask for bad ids
  return Aabb{Vec3(-0.75, -0.75, -0.02), Vec3(0.75, 0.75, 0.85)};
}

std::vector<std::pair<std::string, std::string>> task_rigid_pairs(const std::string& task_id) {
  if (task_id == "hammer_nail") return {{"handle", "head"}};
  task_prompt(task_id);  // UnknownTask for bad ids
  return {};
}

}  // namespace dxs
