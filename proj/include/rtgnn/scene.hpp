#pragma once

// Scene sequences and their JSON-lines encoding (one scene per line). The
// schema is described in docs/scene_format.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {

inline constexpr std::string_view kSceneSchema = "rtgnn.scene/1";
inline constexpr int kSceneRateHz = 2;
inline constexpr double kSceneStepSeconds = 0.5;

struct SceneStep {
  double t = 0.0;
  std::vector<AgentState> agents;  // intentions are left empty

  const AgentState* find(std::int64_t id) const;
  bool operator==(const SceneStep& other) const;
};

struct SceneSequence {
  std::string id;
  SemanticMap map;
  std::vector<SceneStep> steps;

  // Id of the agent of kind ego, if the scene has one.
  std::optional<std::int64_t> ego_id() const;
  bool operator==(const SceneSequence& other) const = default;
};

// Schema violation; the message starts with "line N:" when a line is known.
class SceneFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Strict parse: unknown or missing fields, hz != 2, timestamps that are not
// strictly increasing in 0.5 s steps, duplicate agent ids within a step, more
// than one ego id, and malformed maps are all rejected.
SceneSequence parse_scene(std::string_view json, std::size_t line_number = 0);
std::string scene_to_json(const SceneSequence& scene);

std::vector<SceneSequence> load_scenes(const std::filesystem::path& path);
void write_scenes(const std::filesystem::path& path, const std::vector<SceneSequence>& scenes);

// Planned ego controls, one row per step: "step,a,omega" with a header.
std::vector<ControlInput> load_ego_controls(const std::filesystem::path& path);
void write_ego_controls(const std::filesystem::path& path, const std::vector<ControlInput>& u);

}  // namespace rtgnn
