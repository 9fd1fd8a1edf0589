#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {
namespace {

using testing::random_agents;
using testing::test_map;

AgentState make_agent(std::int64_t id, AgentKind kind, VehicleState s) {
  AgentState a;
  a.id = id;
  a.kind = kind;
  a.state = s;
  return a;
}

TEST(IntentionTest, ValidationAndArgmax) {
  EXPECT_THROW(Intention({0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(Intention({1.5, -0.5}), std::invalid_argument);
  const Intention tie({0.4, 0.1, 0.4, 0.1});
  EXPECT_EQ(tie.argmax(), 0u);
  EXPECT_EQ(Intention::one_hot(5, 3).argmax(), 3u);
  EXPECT_DOUBLE_EQ(Intention::uniform(4)[2], 0.25);
}

TEST(Sampling, InverseCdfAndSeeds) {
  const std::vector<double> p = {0.2, 0.0, 0.5, 0.3};
  EXPECT_EQ(sample_index(p, 0.0), 0u);
  EXPECT_EQ(sample_index(p, 0.2), 2u);
  EXPECT_EQ(sample_index(p, 0.69), 2u);
  EXPECT_EQ(sample_index(p, 0.9999999999), 3u);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform_unit(rng);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(AgentKinds, StringRoundTrip) {
  for (const AgentKind k : {AgentKind::kVehicle, AgentKind::kPedestrian, AgentKind::kEgo}) {
    EXPECT_EQ(agent_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(agent_kind_from_string("bicycle"), std::invalid_argument);
}

TEST(Region, EgoAlignedRectangle) {
  const VehicleState ego{0, 0, 0, 5};
  const RegionConfig r;
  EXPECT_TRUE(in_region(ego, {30, 0, 0, 0}, r));
  EXPECT_FALSE(in_region(ego, {-15, 0, 0, 0}, r));
  EXPECT_TRUE(in_region(ego, {0, 25, 0, 0}, r));
  EXPECT_TRUE(in_region(ego, {-10, -25, 0, 0}, r));
  EXPECT_FALSE(in_region(ego, {40.01, 0, 0, 0}, r));
  // Rotated ego: "ahead" follows its heading.
  const VehicleState north{0, 0, std::numbers::pi / 2, 5};
  EXPECT_TRUE(in_region(north, {0, 30, 0, 0}, r));
  EXPECT_FALSE(in_region(north, {0, -15, 0, 0}, r));
}

TEST(Region, SelectionKeepsEgoAndRequiresIt) {
  std::vector<AgentState> snap = {make_agent(1, AgentKind::kEgo, {0, 0, 0, 5}),
                                  make_agent(2, AgentKind::kVehicle, {30, 0, 0, 5}),
                                  make_agent(3, AgentKind::kVehicle, {-15, 0, 0, 5})};
  const auto local = select_local_agents(snap, 1);
  ASSERT_EQ(local.size(), 2u);
  EXPECT_EQ(local[0].id, 1);
  EXPECT_EQ(local[1].id, 2);
  EXPECT_THROW(select_local_agents(snap, 99), std::invalid_argument);
}

TEST(Graph, EdgesWithinRadius) {
  const MotionPrimitiveSet prims;
  GraphConfig cfg = testing::graph_config_for(testing::small_config());
  std::vector<AgentState> agents = {make_agent(1, AgentKind::kVehicle, {0, 0, 0, 5}),
                                    make_agent(2, AgentKind::kVehicle, {20, 0, 0, 5}),
                                    make_agent(3, AgentKind::kVehicle, {50, 0, 0, 5})};
  const TrafficGraph g = build_graph(agents, prims, test_map(), cfg);
  ASSERT_EQ(g.nodes.size(), 3u);
  EXPECT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.in_degree(0), 1u);
  EXPECT_EQ(g.in_degree(1), 1u);
  EXPECT_EQ(g.in_degree(2), 0u);
  for (const GraphEdge& e : g.edges) EXPECT_NE(e.src, e.dst);

  const TrafficGraph single = build_graph({agents[0]}, prims, test_map(), cfg);
  EXPECT_EQ(single.nodes.size(), 1u);
  EXPECT_TRUE(single.edges.empty());
  EXPECT_EQ(single.nodes[0].future.states.size(), 441u);
  EXPECT_EQ(single.nodes[0].agent.intention, Intention::uniform(441));
}

TEST(Graph, PedestriansPinnedToZeroPrimitive) {
  const MotionPrimitiveSet prims;
  AgentState ped = make_agent(4, AgentKind::kPedestrian, {1, 1, 0, 1});
  ped.intention = Intention::uniform(441);
  const TrafficGraph g =
      build_graph({ped}, prims, test_map(), testing::graph_config_for(testing::small_config()));
  EXPECT_EQ(g.nodes[0].agent.intention, Intention::one_hot(441, 220));
}

TEST(Graph, ConditioningOnEgo) {
  const MotionPrimitiveSet prims;
  std::mt19937_64 rng(12);
  auto agents = random_agents(rng, 3, true, 441, 8.0);
  for (auto& a : agents) a.kind = a.kind == AgentKind::kEgo ? a.kind : AgentKind::kVehicle;
  const TrafficGraph g =
      build_graph(agents, prims, test_map(), testing::graph_config_for(testing::small_config()));
  ASSERT_EQ(g.edges.size(), 6u);
  const TrafficGraph c = condition_on_ego(g, {0.0, 0.0}, prims);
  ASSERT_TRUE(c.ego_index().has_value());
  const std::size_t e = *c.ego_index();
  EXPECT_TRUE(c.ego_conditioned);
  EXPECT_EQ(c.in_degree(e), 0u);
  EXPECT_EQ(c.out_degree(e), 2u);
  EXPECT_EQ(c.nodes[e].agent.intention.argmax(), 220u);
  EXPECT_EQ(c.nodes[e].agent.intention, Intention::one_hot(441, 220));
  const TrafficGraph c2 = condition_on_ego(g, {0.9, 0.0}, prims);
  EXPECT_EQ(c2.nodes[e].agent.intention.argmax(), prims.index(11, 10));

  agents[0].kind = AgentKind::kVehicle;
  const TrafficGraph no_ego =
      build_graph(agents, prims, test_map(), testing::graph_config_for(testing::small_config()));
  EXPECT_THROW(condition_on_ego(no_ego, {0, 0}, prims), std::invalid_argument);
}

TEST(Raster, EmptyMapIsZero) {
  const MapRaster r = rasterize_map({}, {0, 0, 0, 0}, {20, 0.5, 1.75});
  ASSERT_EQ(r.data.size(), 3u * 20 * 20);
  for (const double v : r.data) EXPECT_EQ(v, 0.0);
}

TEST(Raster, LeftHalfPlaneFillsTopRows) {
  SemanticMap m;
  m.drivable.push_back({{-100, 0}, {100, 0}, {100, 100}, {-100, 100}});
  const MapRaster r = rasterize_map(m, {0, 0, 0, 0}, {20, 0.5, 1.75});
  for (std::size_t row = 0; row < 20; ++row) {
    for (std::size_t col = 0; col < 20; ++col) {
      EXPECT_EQ(r.at(0, row, col), row < 10 ? 1.0 : 0.0) << row << "," << col;
      EXPECT_EQ(r.at(1, row, col), 0.0);
    }
  }
}

TEST(Raster, AlignedLaneHasUnitCosine) {
  const SemanticMap m = test_map();
  const MapRaster r = rasterize_map(m, {0, -1.75, 0, 0}, {20, 0.5, 1.75});
  // The centre rows lie on the ego's own lane.
  EXPECT_EQ(r.at(1, 9, 10), 1.0);
  EXPECT_NEAR(r.at(2, 9, 10), 1.0, 1e-12);
  const MapRaster flipped = rasterize_map(m, {0, -1.75, std::numbers::pi, 0}, {20, 0.5, 1.75});
  EXPECT_NEAR(flipped.at(2, 9, 10), -1.0, 1e-12);
}

TEST(Maps, ValidationRejectsBadLanes) {
  SemanticMap m;
  m.lanes.push_back({{{0, 0}}, {0.0}});
  EXPECT_THROW(validate_map(m), std::invalid_argument);
  m.lanes[0] = {{{0, 0}, {1, 0}}, {0.0}};
  EXPECT_THROW(validate_map(m), std::invalid_argument);
  m.lanes[0] = {{{0, 0}, {1, 0}}, {std::numbers::pi, std::numbers::pi}};
  EXPECT_THROW(validate_map(m), std::invalid_argument);
  EXPECT_NO_THROW(validate_map(test_map()));
}

TEST(Refresh, FeaturesFollowNewStates) {
  const MotionPrimitiveSet prims;
  const GraphConfig cfg = testing::graph_config_for(testing::small_config());
  std::vector<AgentState> agents = {make_agent(1, AgentKind::kVehicle, {0, -1.75, 0, 5}),
                                    make_agent(2, AgentKind::kVehicle, {10, -1.75, 0, 5})};
  TrafficGraph g = build_graph(agents, prims, test_map(), cfg);
  const auto edges = g.edges;
  const std::vector<VehicleState> moved = {{2.5, -1.75, 0, 5}, {12.5, -1.75, 0, 5}};
  refresh_node_features(g, moved, prims, test_map(), cfg);
  EXPECT_EQ(g.edges, edges);
  EXPECT_EQ(g.nodes[0].agent.state, moved[0]);
  EXPECT_EQ(g.nodes[0].future.states[220], integrate_unicycle(moved[0], {}, 0.5));
}

}  // namespace
}  // namespace rtgnn
