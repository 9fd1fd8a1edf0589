#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/scene.hpp"

namespace rtgnn {

enum class ScenarioKind { kCarFollowing, kIntersection, kLaneChange, kParkedMerge, kPedestrianCross };

std::string to_string(ScenarioKind kind);
// Throws std::invalid_argument for an unknown name.
ScenarioKind scenario_kind_from_string(const std::string& name);

// Upper end of the speed envelope the generator accepts, m/s.
inline constexpr double kMaxScenarioSpeed = 30.0;

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kCarFollowing;
  std::size_t min_agents = 2;  // vehicles, ego included; pedestrians are extra
  std::size_t max_agents = 5;
  double min_speed = 4.0;  // initial and desired speeds, m/s
  double max_speed = 10.0;
  std::size_t steps = 11;  // T, snapshots per scene

  // Throws std::invalid_argument for T < 2, an empty or inverted agent range,
  // or speeds outside [0, kMaxScenarioSpeed].
  void validate() const;
};

// One scene with exactly one ego. Every control is a lattice primitive
// integrated exactly, so consecutive states are reachable by construction.
// Deterministic in (spec, seed).
SceneSequence generate_scene(const ScenarioSpec& spec, std::uint64_t seed, const std::string& id);

// Sequence i uses specs[i % specs.size()] and seed derive_seed(seed, i).
// Throws std::invalid_argument when n_sequences == 0 or specs is empty.
std::vector<SceneSequence> generate_corpus(const std::vector<ScenarioSpec>& specs,
                                           std::size_t n_sequences, std::uint64_t seed);

// One spec per scenario kind with default ranges.
std::vector<ScenarioSpec> default_scenario_mix(std::size_t steps = 11);

}  // namespace rtgnn
