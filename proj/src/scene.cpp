#include "rtgnn/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rtgnn {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class Parser {
 public:
  explicit Parser(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    if (line_ > 0) throw SceneFormatError("line " + std::to_string(line_) + ": " + what);
    throw SceneFormatError(what);
  }

  // Rejects any key outside `allowed` and any missing key in `required`.
  void keys(const json& obj, const std::string& where,
            std::initializer_list<std::string_view> required,
            std::initializer_list<std::string_view> optional = {}) const {
    if (!obj.is_object()) fail(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
      const auto known = [&](std::initializer_list<std::string_view> list) {
        return std::find(list.begin(), list.end(), key) != list.end();
      };
      if (!known(required) && !known(optional)) fail("unknown field '" + key + "' in " + where);
    }
    for (const std::string_view key : required) {
      if (!obj.contains(key)) fail(where + " is missing field '" + std::string(key) + "'");
    }
  }

  double number(const json& v, const std::string& where) const {
    if (!v.is_number()) fail(where + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(where + " must be finite");
    return d;
  }

  const json& array(const json& v, const std::string& where) const {
    if (!v.is_array()) fail(where + " must be an array");
    return v;
  }

  Point2 point(const json& v, const std::string& where) const {
    if (!v.is_array() || v.size() != 2) fail(where + " must be [x, y]");
    return {number(v[0], where + "[0]"), number(v[1], where + "[1]")};
  }

 private:
  std::size_t line_;
};

SemanticMap parse_map(const Parser& p, const json& m) {
  p.keys(m, "map", {"drivable", "lanes"});
  SemanticMap map;
  const json& polys = p.array(m["drivable"], "map.drivable");
  for (std::size_t i = 0; i < polys.size(); ++i) {
    const std::string where = "map.drivable[" + std::to_string(i) + "]";
    Polygon poly;
    for (std::size_t k = 0; k < p.array(polys[i], where).size(); ++k) {
      poly.push_back(p.point(polys[i][k], where + "[" + std::to_string(k) + "]"));
    }
    map.drivable.push_back(std::move(poly));
  }
  const json& lanes = p.array(m["lanes"], "map.lanes");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string where = "map.lanes[" + std::to_string(i) + "]";
    Lane lane;
    for (std::size_t k = 0; k < p.array(lanes[i], where).size(); ++k) {
      const json& pt = lanes[i][k];
      const std::string at = where + "[" + std::to_string(k) + "]";
      if (!pt.is_array() || pt.size() != 3) p.fail(at + " must be [x, y, heading]");
      lane.points.push_back({p.number(pt[0], at), p.number(pt[1], at)});
      lane.headings.push_back(p.number(pt[2], at));
    }
    map.lanes.push_back(std::move(lane));
  }
  try {
    validate_map(map);
  } catch (const std::invalid_argument& e) {
    p.fail(std::string("map: ") + e.what());
  }
  return map;
}

AgentState parse_agent(const Parser& p, const json& a, const std::string& where) {
  p.keys(a, where, {"id", "kind", "x", "y", "theta", "v"});
  if (!a["id"].is_number_integer()) p.fail(where + ".id must be an integer");
  if (!a["kind"].is_string()) p.fail(where + ".kind must be a string");
  AgentState agent;
  agent.id = a["id"].get<std::int64_t>();
  try {
    agent.kind = agent_kind_from_string(a["kind"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    p.fail(where + ": " + e.what());
  }
  agent.state.x = p.number(a["x"], where + ".x");
  agent.state.y = p.number(a["y"], where + ".y");
  agent.state.theta = wrap_angle(p.number(a["theta"], where + ".theta"));
  agent.state.v = p.number(a["v"], where + ".v");
  return agent;
}

}  // namespace

const AgentState* SceneStep::find(std::int64_t id) const {
  for (const AgentState& a : agents) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

bool SceneStep::operator==(const SceneStep& other) const {
  if (t != other.t || agents.size() != other.agents.size()) return false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentState& a = agents[i];
    const AgentState& b = other.agents[i];
    if (a.id != b.id || a.kind != b.kind || !(a.state == b.state)) return false;
  }
  return true;
}

std::optional<std::int64_t> SceneSequence::ego_id() const {
  for (const SceneStep& step : steps) {
    for (const AgentState& a : step.agents) {
      if (a.kind == AgentKind::kEgo) return a.id;
    }
  }
  return std::nullopt;
}

SceneSequence parse_scene(std::string_view text, std::size_t line_number) {
  const Parser p(line_number);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    p.fail(std::string("malformed JSON: ") + e.what());
  }
  p.keys(doc, "scene", {"schema", "id", "hz", "map", "steps"});
  if (!doc["schema"].is_string() || doc["schema"].get<std::string>() != kSceneSchema) {
    p.fail("unsupported schema " + doc["schema"].dump() + ", expected \"" +
           std::string(kSceneSchema) + "\"");
  }
  if (!doc["id"].is_string()) p.fail("scene.id must be a string");
  if (!doc["hz"].is_number() || doc["hz"].get<double>() != kSceneRateHz) {
    p.fail("hz must be 2 (primitive duration is 0.5 s), got " + doc["hz"].dump());
  }
  SceneSequence scene;
  scene.id = doc["id"].get<std::string>();
  scene.map = parse_map(p, doc["map"]);

  const json& steps = p.array(doc["steps"], "steps");
  if (steps.empty()) p.fail("steps must not be empty");
  std::optional<std::int64_t> ego;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const std::string where = "steps[" + std::to_string(s) + "]";
    p.keys(steps[s], where, {"t", "agents"});
    SceneStep step;
    step.t = p.number(steps[s]["t"], where + ".t");
    if (s > 0) {
      const double dt = step.t - scene.steps.back().t;
      if (std::abs(dt - kSceneStepSeconds) > 1e-6) {
        p.fail(where + ".t = " + std::to_string(step.t) +
               " does not follow the previous step by 0.5 s");
      }
    }
    std::set<std::int64_t> ids;
    const json& agents = p.array(steps[s]["agents"], where + ".agents");
    for (std::size_t k = 0; k < agents.size(); ++k) {
      AgentState a = parse_agent(p, agents[k], where + ".agents[" + std::to_string(k) + "]");
      if (!ids.insert(a.id).second) {
        p.fail(where + ": duplicate agent id " + std::to_string(a.id));
      }
      if (a.kind == AgentKind::kEgo) {
        if (ego && *ego != a.id) p.fail(where + ": more than one ego id");
        ego = a.id;
      }
      step.agents.push_back(a);
    }
    scene.steps.push_back(std::move(step));
  }
  return scene;
}

std::string scene_to_json(const SceneSequence& scene) {
  ordered_json doc;
  doc["schema"] = kSceneSchema;
  doc["id"] = scene.id;
  doc["hz"] = kSceneRateHz;
  ordered_json drivable = ordered_json::array();
  for (const Polygon& poly : scene.map.drivable) {
    ordered_json pts = ordered_json::array();
    for (const Point2& pt : poly) pts.push_back({pt.x, pt.y});
    drivable.push_back(std::move(pts));
  }
  ordered_json lanes = ordered_json::array();
  for (const Lane& lane : scene.map.lanes) {
    ordered_json pts = ordered_json::array();
    for (std::size_t i = 0; i < lane.points.size(); ++i) {
      pts.push_back({lane.points[i].x, lane.points[i].y, lane.headings[i]});
    }
    lanes.push_back(std::move(pts));
  }
  doc["map"] = {{"drivable", std::move(drivable)}, {"lanes", std::move(lanes)}};
  ordered_json steps = ordered_json::array();
  for (const SceneStep& step : scene.steps) {
    ordered_json agents = ordered_json::array();
    for (const AgentState& a : step.agents) {
      agents.push_back({{"id", a.id},
                        {"kind", to_string(a.kind)},
                        {"x", a.state.x},
                        {"y", a.state.y},
                        {"theta", a.state.theta},
                        {"v", a.state.v}});
    }
    steps.push_back({{"t", step.t}, {"agents", std::move(agents)}});
  }
  doc["steps"] = std::move(steps);
  return doc.dump();
}

std::vector<SceneSequence> load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file '" + path.string() + "'");
  std::vector<SceneSequence> scenes;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    scenes.push_back(parse_scene(line, n));
  }
  return scenes;
}

void write_scenes(const std::filesystem::path& path, const std::vector<SceneSequence>& scenes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (const SceneSequence& s : scenes) out << scene_to_json(s) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<ControlInput> load_ego_controls(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ego controls '" + path.string() + "'");
  std::vector<ControlInput> controls;
  std::string line;
  std::getline(in, line);
  if (line.rfind("step,a,omega", 0) != 0) {
    throw std::runtime_error(path.string() + ": expected header 'step,a,omega'");
  }
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::string step, a, omega;
    std::getline(row, step, ',');
    std::getline(row, a, ',');
    std::getline(row, omega, ',');
    try {
      if (std::stoul(step) != controls.size()) {
        throw std::runtime_error("steps must be 0, 1, 2, ...");
      }
      controls.push_back({std::stod(a), std::stod(omega)});
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": bad row '" + line +
                               "' (" + e.what() + ")");
    }
  }
  return controls;
}

void write_ego_controls(const std::filesystem::path& path, const std::vector<ControlInput>& u) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "step,a,omega\n";
  out.precision(17);
  for (std::size_t i = 0; i < u.size(); ++i) out << i << ',' << u[i].a << ',' << u[i].omega << '\n';
}

}  // namespace rtgnn
