#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/gnn.hpp"
#include "rtgnn/parameters.hpp"
#include "rtgnn/scene.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {

// Predicted or observed positions of a set of agents. waypoints[k][h] is
// agent k after h+1 steps.
struct Trajectory {
  std::vector<std::int64_t> agent_ids;
  std::vector<std::vector<Point2>> waypoints;

  std::size_t horizon() const { return waypoints.empty() ? 0 : waypoints.front().size(); }
  // First `steps` waypoints of every agent.
  Trajectory prefix(std::size_t steps) const;
  // The listed agents, in the listed order. Throws if one is missing.
  Trajectory select(const std::vector<std::int64_t>& ids) const;
  bool operator==(const Trajectory&) const = default;
};

enum class RolloutMode { kMaxLikelihood, kSampled };

struct RolloutConfig {
  std::size_t horizon = 8;
  RolloutMode mode = RolloutMode::kMaxLikelihood;
  // Planned ego controls, one per step; requires an ego-conditioned graph.
  std::optional<std::vector<ControlInput>> ego_controls;
  std::uint64_t seed = 0;
  std::size_t samples = 1;  // trajectories drawn in sampled mode
};

struct ModelRef {
  const ParameterStore& params;
  const GnnConfig& config;
};

// Steps the graph forward: refresh intentions, choose one control per node,
// integrate, and rebuild node features. Node and edge sets stay those of g0.
// Max-likelihood mode takes the lowest-index most likely primitive, which is a
// stepwise approximation of the most likely trajectory. Throws
// std::invalid_argument when ego_controls and g0.ego_conditioned disagree or
// the control count differs from the horizon.
std::vector<Trajectory> rollout(const ModelRef& model, const TrafficGraph& g0,
                                const SemanticMap& map, const RolloutConfig& config,
                                const GraphConfig& graph_config = {});

// Every agent holds zero control from its initial state.
Trajectory constant_velocity_predict(const TrafficGraph& g0, std::size_t horizon,
                                     const IntegrationOptions& options = {});

// Exact integration of a control sequence.
std::vector<Point2> integrate_controls(const VehicleState& start,
                                       const std::vector<ControlInput>& controls, double dt,
                                       const IntegrationOptions& options = {});

// Mean over agents and steps of waypoint distance. Throws
// std::invalid_argument on horizon or agent-id mismatch.
double ade(const Trajectory& pred, const Trajectory& truth);
// Mean over agents of the final-waypoint distance.
double fde(const Trajectory& pred, const Trajectory& truth);
// Per agent, the minimum over the first k predictions; then the mean over
// agents. Throws std::invalid_argument when fewer than k predictions exist.
double min_k_ade(const std::vector<Trajectory>& preds, const Trajectory& truth, std::size_t k = 5);
double min_k_fde(const std::vector<Trajectory>& preds, const Trajectory& truth, std::size_t k = 5);

struct VelocityEstimate {
  double v = 0.0;
  double theta = 0.0;
  bool fallback = false;  // too few positions; stationary with the given heading
};

// Backward difference over the latest one-second window (two 0.5 s steps), or
// one step when only two positions exist.
VelocityEstimate estimate_velocity(const std::vector<Point2>& past, double fallback_heading = 0.0,
                                   double dt = kSceneStepSeconds);

// ---- scene-level evaluation -------------------------------------------------

struct EvalConfig {
  std::size_t history = 2;  // observed steps before the prediction start
  std::size_t horizon = 8;
  std::size_t samples = 5;
  std::uint64_t seed = 0;
  bool conditional = false;  // condition on the ego's planned controls
  // Planned ego controls for conditional runs; the observed ones when unset.
  std::optional<std::vector<ControlInput>> ego_controls;
  RegionConfig region;
  GraphConfig graph;
};

// Graph at step t0 of the scene over the ego-region agents, with intentions
// warmed up over the preceding `history` observed transitions (agents first
// seen later start uniform). Observed states are used throughout.
TrafficGraph warm_start(const ModelRef& model, const SceneSequence& scene, std::size_t t0,
                        std::size_t history, const RegionConfig& region,
                        const GraphConfig& graph_config);

// Observed ego controls between consecutive steps, snapped to the lattice.
std::vector<ControlInput> observed_ego_controls(const SceneSequence& scene, std::size_t t0,
                                                std::size_t horizon,
                                                const MotionPrimitiveSet& prims);

// Truth positions after t0 for the given agents; agents missing at any
// horizon step are dropped.
Trajectory truth_trajectory(const SceneSequence& scene, std::size_t t0, std::size_t horizon,
                            const std::vector<std::int64_t>& ids);

// Horizons reported in evaluation tables, in seconds.
inline constexpr std::array<double, 4> kEvalHorizonsSeconds = {1.0, 2.0, 3.0, 4.0};

struct MetricRow {
  std::string method;  // const_vel, rtgnn_ml, rtgnn_min5, ...
  std::string metric;  // ade or fde
  std::array<double, 4> values{};
};

struct ScenePrediction {
  std::string scene_id;
  std::size_t t0 = 0;
  Trajectory truth;                 // scored agents
  Trajectory const_vel;
  Trajectory ml;
  std::vector<Trajectory> samples;
  TrafficGraph start;
};

// Scored agents are the non-ego vehicles of the start graph. When the scene
// ends before the horizon, truth stays empty and every non-ego vehicle is
// predicted. Throws std::invalid_argument for a conditional run without an ego.
ScenePrediction predict_scene(const ModelRef& model, const SceneSequence& scene,
                              const EvalConfig& config);

// Metrics per scene pooled over scored agents, then averaged over scenes.
// Scenes without scored agents are skipped.
std::vector<MetricRow> evaluate(const std::vector<ScenePrediction>& predictions,
                                std::size_t k = 5);

std::string format_table(const std::vector<MetricRow>& rows);
void write_table_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

// Prediction CSV: scene_id,agent_id,sample,step,x,y where sample is "truth",
// "cv", "ml" or a sample number and step is the absolute scene step.
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<ScenePrediction>& predictions);
std::vector<ScenePrediction> read_predictions_csv(const std::filesystem::path& path);

}  // namespace rtgnn
