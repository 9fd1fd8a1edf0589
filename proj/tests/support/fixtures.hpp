#pragma once

// Shared builders for tests: a reduced-raster model, simple maps and random
// graphs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rtgnn/gnn.hpp"
#include "rtgnn/scene.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn::testing {

// Default architecture with a 28-cell raster so forward passes stay cheap.
inline GnnConfig small_config() {
  GnnConfig c;
  c.raster.cells = 28;
  c.raster.resolution = 1.5;
  return c;
}

inline GraphConfig graph_config_for(const GnnConfig& model) {
  GraphConfig g;
  g.raster = model.raster;
  return g;
}

// Two-lane eastbound road with a crossing side road.
inline SemanticMap test_map() {
  SemanticMap m;
  m.drivable.push_back({{-100.0, -7.0}, {100.0, -7.0}, {100.0, 0.0}, {-100.0, 0.0}});
  m.drivable.push_back({{-3.5, -60.0}, {3.5, -60.0}, {3.5, 60.0}, {-3.5, 60.0}});
  for (const double y : {-1.75, -5.25}) {
    Lane lane;
    for (int i = 0; i <= 50; ++i) {
      lane.points.push_back({-100.0 + 4.0 * i, y});
      lane.headings.push_back(0.0);
    }
    m.lanes.push_back(lane);
  }
  Lane north;
  for (int i = 0; i <= 30; ++i) {
    north.points.push_back({1.75, -60.0 + 4.0 * i});
    north.headings.push_back(std::acos(0.0));
  }
  m.lanes.push_back(north);
  return m;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

inline Intention random_intention(std::mt19937_64& rng, std::size_t size) {
  std::vector<double> p(size);
  double total = 0.0;
  for (double& x : p) {
    x = -std::log(1.0 - uniform_unit(rng));
    total += x;
  }
  for (double& x : p) x /= total;
  // Renormalise once more so the sum is exact to rounding.
  double again = 0.0;
  for (const double x : p) again += x;
  for (double& x : p) x /= again;
  return Intention(p);
}

// n agents scattered within radius of the origin; agent 0 is the ego when
// with_ego, and roughly a fifth of the rest are pedestrians.
inline std::vector<AgentState> random_agents(std::mt19937_64& rng, std::size_t n, bool with_ego,
                                             std::size_t primitives = 441,
                                             double radius = 15.0) {
  std::vector<AgentState> agents;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState a;
    a.id = static_cast<std::int64_t>(10 + 3 * i);
    a.kind = (with_ego && i == 0)               ? AgentKind::kEgo
             : (i > 0 && uniform_unit(rng) < 0.2) ? AgentKind::kPedestrian
                                                  : AgentKind::kVehicle;
    a.state = {uniform(rng, -radius, radius), uniform(rng, -radius, radius),
               uniform(rng, -3.0, 3.0), uniform(rng, 0.0, 12.0)};
    a.intention = random_intention(rng, primitives);
    agents.push_back(a);
  }
  return agents;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rtgnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rtgnn::testing
