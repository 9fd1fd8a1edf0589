#include "rtgnn/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace rtgnn {

bool is_valid_intention(const std::vector<double>& p, double tolerance) {
  if (p.empty()) return false;
  double s = 0.0;
  for (const double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tolerance;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  const auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ stream);
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_index(std::span<const double> p, double u) {
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

Intention::Intention(std::vector<double> probabilities) : p_(std::move(probabilities)) {
  if (!is_valid_intention(p_)) {
    throw std::invalid_argument("intention must be non-negative and sum to 1");
  }
}

Intention Intention::uniform(std::size_t size) {
  return Intention(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

Intention Intention::one_hot(std::size_t size, std::size_t index) {
  if (index >= size) throw std::out_of_range("one_hot index outside the lattice");
  std::vector<double> p(size, 0.0);
  p[index] = 1.0;
  return Intention(std::move(p));
}

std::size_t Intention::argmax() const {
  return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kVehicle: return "vehicle";
    case AgentKind::kPedestrian: return "pedestrian";
    case AgentKind::kEgo: return "ego";
  }
  return "vehicle";
}

AgentKind agent_kind_from_string(const std::string& name) {
  if (name == "vehicle") return AgentKind::kVehicle;
  if (name == "pedestrian") return AgentKind::kPedestrian;
  if (name == "ego") return AgentKind::kEgo;
  throw std::invalid_argument("unknown agent kind '" + name + "'");
}

void validate_map(const SemanticMap& map) {
  for (std::size_t i = 0; i < map.drivable.size(); ++i) {
    if (map.drivable[i].size() < 3) {
      throw std::invalid_argument("drivable polygon " + std::to_string(i) +
                                  " has fewer than 3 vertices");
    }
  }
  for (std::size_t i = 0; i < map.lanes.size(); ++i) {
    const Lane& lane = map.lanes[i];
    if (lane.points.size() < 2) {
      throw std::invalid_argument("lane " + std::to_string(i) + " has fewer than 2 points");
    }
    if (lane.headings.size() != lane.points.size()) {
      throw std::invalid_argument("lane " + std::to_string(i) +
                                  " heading count differs from point count");
    }
    for (std::size_t k = 0; k + 1 < lane.points.size(); ++k) {
      const double dir = std::atan2(lane.points[k + 1].y - lane.points[k].y,
                                    lane.points[k + 1].x - lane.points[k].x);
      if (std::abs(wrap_angle(dir - lane.headings[k])) > std::numbers::pi / 2.0) {
        throw std::invalid_argument("lane " + std::to_string(i) + " heading at point " +
                                    std::to_string(k) + " opposes the polyline direction");
      }
    }
  }
}

namespace {

struct RasterGrid {
  std::size_t cells;
  double res;
  double half;

  double col_center(std::size_t c) const { return -half + res * (static_cast<double>(c) + 0.5); }
  double row_center(std::size_t r) const { return half - res * (static_cast<double>(r) + 0.5); }
  // First column whose centre is >= x.
  long first_col_at_or_after(double x) const {
    return static_cast<long>(std::ceil((x + half) / res - 0.5));
  }
  long clamp_index(long i) const {
    return std::clamp(i, 0L, static_cast<long>(cells) - 1);
  }
};

void fill_polygon(const std::vector<Point2>& poly, const RasterGrid& g, double* mask) {
  std::vector<double> xs;
  for (std::size_t r = 0; r < g.cells; ++r) {
    const double y = g.row_center(r);
    xs.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2& p = poly[i];
      const Point2& q = poly[(i + 1) % poly.size()];
      if ((p.y > y) != (q.y > y)) xs.push_back(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const long c0 = std::max(0L, g.first_col_at_or_after(xs[k]));
      const long c1 = std::min(static_cast<long>(g.cells), g.first_col_at_or_after(xs[k + 1]));
      for (long c = c0; c < c1; ++c) mask[r * g.cells + static_cast<std::size_t>(c)] = 1.0;
    }
  }
}

}  // namespace

MapRaster rasterize_map(const SemanticMap& map, const VehicleState& agent_pose,
                        const RasterConfig& config) {
  const std::size_t n = config.cells;
  MapRaster raster;
  raster.cells = n;
  raster.data.assign(kRasterChannels * n * n, 0.0);
  const RasterGrid grid{n, config.resolution, 0.5 * config.resolution * static_cast<double>(n)};
  const Pose2 frame = Pose2::frame_of(agent_pose);
  const auto local = [&](const Point2& p) {
    const auto q = frame.apply(p.x, p.y);
    return Point2{q[0], q[1]};
  };

  double* drivable = raster.data.data();
  double* lane_mask = drivable + n * n;
  double* lane_cos = lane_mask + n * n;

  std::vector<Point2> poly;
  for (const Polygon& polygon : map.drivable) {
    poly.clear();
    for (const Point2& p : polygon) poly.push_back(local(p));
    fill_polygon(poly, grid, drivable);
  }

  std::vector<double> best(n * n, std::numeric_limits<double>::infinity());
  const double hw = config.lane_half_width;
  for (const Lane& lane : map.lanes) {
    for (std::size_t k = 0; k + 1 < lane.points.size(); ++k) {
      const Point2 p0 = local(lane.points[k]);
      const Point2 p1 = local(lane.points[k + 1]);
      const double h0 = lane.headings[k] - agent_pose.theta;
      const double dh = wrap_angle(lane.headings[k + 1] - lane.headings[k]);
      const double dx = p1.x - p0.x;
      const double dy = p1.y - p0.y;
      const double len2 = dx * dx + dy * dy;
      const double xmin = std::min(p0.x, p1.x) - hw, xmax = std::max(p0.x, p1.x) + hw;
      const double ymin = std::min(p0.y, p1.y) - hw, ymax = std::max(p0.y, p1.y) + hw;
      if (xmax < -grid.half || xmin > grid.half || ymax < -grid.half || ymin > grid.half) continue;
      const long c0 = grid.clamp_index(grid.first_col_at_or_after(xmin));
      const long c1 = grid.clamp_index(grid.first_col_at_or_after(xmax));
      const long r0 = grid.clamp_index(static_cast<long>(std::floor((grid.half - ymax) / grid.res - 0.5)));
      const long r1 = grid.clamp_index(static_cast<long>(std::ceil((grid.half - ymin) / grid.res - 0.5)));
      for (long r = r0; r <= r1; ++r) {
        const double cy = grid.row_center(static_cast<std::size_t>(r));
        for (long c = c0; c <= c1; ++c) {
          const double cx = grid.col_center(static_cast<std::size_t>(c));
          double s = len2 > 0.0 ? ((cx - p0.x) * dx + (cy - p0.y) * dy) / len2 : 0.0;
          s = std::clamp(s, 0.0, 1.0);
          const double ex = cx - (p0.x + s * dx);
          const double ey = cy - (p0.y + s * dy);
          const double d = std::sqrt(ex * ex + ey * ey);
          const std::size_t cell = static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c);
          if (d <= hw && d < best[cell]) {
            best[cell] = d;
            lane_mask[cell] = 1.0;
            lane_cos[cell] = std::cos(h0 + s * dh);
          }
        }
      }
    }
  }
  return raster;
}

bool in_region(const VehicleState& ego, const VehicleState& agent, const RegionConfig& region) {
  const auto p = Pose2::frame_of(ego).apply(agent.x, agent.y);
  return p[0] >= -region.behind && p[0] <= region.ahead && std::abs(p[1]) <= region.side;
}

std::vector<AgentState> select_local_agents(const std::vector<AgentState>& snapshot,
                                            std::int64_t ego_id, const RegionConfig& region) {
  const auto ego = std::find_if(snapshot.begin(), snapshot.end(),
                                [&](const AgentState& a) { return a.id == ego_id; });
  if (ego == snapshot.end()) {
    throw std::invalid_argument("select_local_agents: ego " + std::to_string(ego_id) +
                                " not in snapshot");
  }
  std::vector<AgentState> out;
  for (const AgentState& a : snapshot) {
    if (a.id == ego_id || in_region(ego->state, a.state, region)) out.push_back(a);
  }
  return out;
}

std::optional<std::size_t> TrafficGraph::ego_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].agent.kind == AgentKind::kEgo) return i;
  }
  return std::nullopt;
}

std::size_t TrafficGraph::in_degree(std::size_t node) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [&](const GraphEdge& e) { return e.dst == node; }));
}

std::size_t TrafficGraph::out_degree(std::size_t node) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [&](const GraphEdge& e) { return e.src == node; }));
}

TrafficGraph build_graph(const std::vector<AgentState>& agents, const MotionPrimitiveSet& prims,
                         const SemanticMap& map, const GraphConfig& config) {
  TrafficGraph g;
  g.nodes.reserve(agents.size());
  for (const AgentState& a : agents) {
    GraphNode node;
    node.agent = a;
    if (a.kind == AgentKind::kPedestrian) {
      node.agent.intention = Intention::one_hot(prims.size(), prims.zero_index());
    } else if (a.intention.size() == 0) {
      node.agent.intention = Intention::uniform(prims.size());
    } else if (a.intention.size() != prims.size()) {
      throw std::invalid_argument("agent " + std::to_string(a.id) + " intention has " +
                                  std::to_string(a.intention.size()) + " entries, lattice has " +
                                  std::to_string(prims.size()));
    }
    node.future = future_states(a.state, prims, config.integration);
    node.raster = rasterize_map(map, a.state, config.raster);
    g.nodes.push_back(std::move(node));
  }
  for (std::size_t dst = 0; dst < g.nodes.size(); ++dst) {
    for (std::size_t src = 0; src < g.nodes.size(); ++src) {
      if (src == dst) continue;
      const VehicleState& a = g.nodes[dst].agent.state;
      const VehicleState& b = g.nodes[src].agent.state;
      if (std::hypot(a.x - b.x, a.y - b.y) <= config.radius) g.edges.push_back({src, dst});
    }
  }
  return g;
}

void refresh_node_features(TrafficGraph& g, const std::vector<VehicleState>& states,
                           const MotionPrimitiveSet& prims, const SemanticMap& map,
                           const GraphConfig& config) {
  if (states.size() != g.nodes.size()) {
    throw std::invalid_argument("refresh_node_features: state count differs from node count");
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    GraphNode& node = g.nodes[i];
    node.agent.state = states[i];
    node.future = future_states(states[i], prims, config.integration);
    node.raster = rasterize_map(map, states[i], config.raster);
  }
}

TrafficGraph condition_on_ego(const TrafficGraph& g, const ControlInput& ego_control,
                              const MotionPrimitiveSet& prims) {
  const auto ego = g.ego_index();
  if (!ego) throw std::invalid_argument("condition_on_ego: graph has no ego node");
  TrafficGraph out = g;
  std::erase_if(out.edges, [&](const GraphEdge& e) { return e.dst == *ego; });
  out.nodes[*ego].agent.intention = Intention::one_hot(prims.size(), prims.nearest(ego_control));
  out.ego_conditioned = true;
  return out;
}

}  // namespace rtgnn
