#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/tensor.hpp"

namespace rtgnn {

// Probability vector over the primitive lattice, index-aligned with
// MotionPrimitiveSet.
class Intention {
 public:
  Intention() = default;
  // Throws std::invalid_argument unless non-negative and summing to 1 +- 1e-9.
  explicit Intention(std::vector<double> probabilities);

  static Intention uniform(std::size_t size);
  static Intention one_hot(std::size_t size, std::size_t index);

  const std::vector<double>& probabilities() const { return p_; }
  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  // Lowest index among the maximal entries.
  std::size_t argmax() const;

  bool operator==(const Intention&) const = default;

 private:
  std::vector<double> p_;
};

bool is_valid_intention(const std::vector<double>& p, double tolerance = 1e-9);

// Independent stream seed for (seed, stream), via SplitMix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
// 53-bit uniform draw in [0, 1).
double uniform_unit(std::mt19937_64& rng);
// Inverse-CDF draw: smallest i with u < p[0] + ... + p[i]. Rounding slack at
// the top goes to the last non-zero entry.
std::size_t sample_index(std::span<const double> p, double u);

enum class AgentKind { kVehicle, kPedestrian, kEgo };

std::string to_string(AgentKind kind);
// Throws std::invalid_argument for unknown names.
AgentKind agent_kind_from_string(const std::string& name);

struct AgentState {
  std::int64_t id = 0;
  AgentKind kind = AgentKind::kVehicle;
  VehicleState state;
  Intention intention;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

using Polygon = std::vector<Point2>;

// Directed centreline; headings[i] is the travel direction at points[i].
struct Lane {
  std::vector<Point2> points;
  std::vector<double> headings;
  bool operator==(const Lane&) const = default;
};

struct SemanticMap {
  std::vector<Polygon> drivable;
  std::vector<Lane> lanes;
  bool operator==(const SemanticMap&) const = default;
};

// Throws std::invalid_argument if a lane has < 2 points, mismatched heading
// count, or headings that disagree with the polyline direction by more than
// pi/2.
void validate_map(const SemanticMap& map);

struct RasterConfig {
  std::size_t cells = 100;
  double resolution = 0.5;  // m per cell
  double lane_half_width = 1.75;
};

// Agent-centric raster, channels:
//   0  drivable area mask
//   1  lane occupancy mask (within lane_half_width of a centreline)
//   2  cos(lane heading - agent heading) on lane cells, 0 elsewhere
// Row 0 is the agent's far left (+y), column 0 is the far rear (-x); cell
// (r, c) has its centre at x = -L/2 + res (c + 1/2), y = L/2 - res (r + 1/2)
// in the agent frame.
struct MapRaster {
  std::size_t cells = 0;
  std::vector<double> data;  // [3][cells][cells]

  double at(std::size_t channel, std::size_t row, std::size_t col) const {
    return data[(channel * cells + row) * cells + col];
  }
};

inline constexpr std::size_t kRasterChannels = 3;

// `agent_pose` is the agent's global pose (x, y, heading).
MapRaster rasterize_map(const SemanticMap& map, const VehicleState& agent_pose,
                        const RasterConfig& config = {});

// Ego-aligned selection rectangle.
struct RegionConfig {
  double ahead = 40.0;
  double behind = 10.0;
  double side = 25.0;
};

// Agents inside [-behind, ahead] x [-side, side] in the ego frame, boundary
// inclusive. The ego itself is always kept. Throws std::invalid_argument if
// ego_id is not in the snapshot.
std::vector<AgentState> select_local_agents(const std::vector<AgentState>& snapshot,
                                            std::int64_t ego_id,
                                            const RegionConfig& region = {});
bool in_region(const VehicleState& ego, const VehicleState& agent, const RegionConfig& region);

struct GraphNode {
  AgentState agent;
  FutureStates future;
  MapRaster raster;
};

// Directed edge src -> dst (message from src to dst).
struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  bool operator==(const GraphEdge&) const = default;
};

struct TrafficGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  bool ego_conditioned = false;

  std::optional<std::size_t> ego_index() const;
  std::size_t in_degree(std::size_t node) const;
  std::size_t out_degree(std::size_t node) const;
};

struct GraphConfig {
  double radius = 25.0;
  RasterConfig raster;
  IntegrationOptions integration;
};

// Pedestrians get the fixed one-hot intention on the zero primitive; other
// agents keep the intention they carry (uniform if empty).
TrafficGraph build_graph(const std::vector<AgentState>& agents, const MotionPrimitiveSet& prims,
                         const SemanticMap& map, const GraphConfig& config = {});

// Same nodes and edges, node features recomputed at new states. `states` is
// index-aligned with g.nodes.
void refresh_node_features(TrafficGraph& g, const std::vector<VehicleState>& states,
                           const MotionPrimitiveSet& prims, const SemanticMap& map,
                           const GraphConfig& config = {});

// Drops every edge into the ego and pins the ego intention to the lattice
// primitive nearest to ego_control. Throws std::invalid_argument without an
// ego node.
TrafficGraph condition_on_ego(const TrafficGraph& g, const ControlInput& ego_control,
                              const MotionPrimitiveSet& prims);

}  // namespace rtgnn
