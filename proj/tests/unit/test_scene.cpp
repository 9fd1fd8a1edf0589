#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "rtgnn/scene.hpp"

namespace rtgnn {
namespace {

std::string minimal_scene(const std::string& hz = "2", const std::string& t1 = "0.5") {
  return R"({"schema":"rtgnn.scene/1","id":"s","hz":)" + hz +
         R"(,"map":{"drivable":[],"lanes":[]},"steps":[)"
         R"({"t":0,"agents":[{"id":1,"kind":"vehicle","x":0,"y":0,"theta":0,"v":2}]},)"
         R"({"t":)" + t1 +
         R"(,"agents":[{"id":1,"kind":"vehicle","x":1,"y":0,"theta":0,"v":2}]}]})";
}

SceneSequence sample_scene() {
  SceneSequence s;
  s.id = "sample-00001";
  s.map = testing::test_map();
  for (int t = 0; t < 3; ++t) {
    SceneStep step;
    step.t = 0.5 * t;
    AgentState ego;
    ego.id = 1;
    ego.kind = AgentKind::kEgo;
    ego.state = {0.1 * t, -1.75, 0.0, 5.0 + 1.0 / 3.0};
    AgentState ped;
    ped.id = 2;
    ped.kind = AgentKind::kPedestrian;
    ped.state = {20.0, 3.0, -1.5707963267948966, 1.2};
    step.agents = {ego, ped};
    s.steps.push_back(step);
  }
  return s;
}

TEST(SceneParse, MinimalSingleAgentScene) {
  const SceneSequence s = parse_scene(minimal_scene());
  EXPECT_EQ(s.id, "s");
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.steps[1].agents[0].state.x, 1.0);
  EXPECT_FALSE(s.ego_id().has_value());
  ASSERT_NE(s.steps[0].find(1), nullptr);
  EXPECT_EQ(s.steps[0].find(7), nullptr);
}

TEST(SceneParse, RejectsWrongRateAndTiming) {
  EXPECT_THROW(parse_scene(minimal_scene("10")), SceneFormatError);
  EXPECT_THROW(parse_scene(minimal_scene("2", "0.4")), SceneFormatError);
  EXPECT_THROW(parse_scene(minimal_scene("2", "0")), SceneFormatError);
}

TEST(SceneParse, RejectsSchemaViolations) {
  std::string unknown = minimal_scene();
  unknown.insert(1, R"("extra":1,)");
  EXPECT_THROW(parse_scene(unknown), SceneFormatError);
  std::string dup = minimal_scene();
  const std::string agent = R"({"id":1,"kind":"vehicle","x":0,"y":0,"theta":0,"v":2})";
  dup.replace(dup.find(agent), agent.size(), agent + "," + agent);
  EXPECT_THROW(parse_scene(dup), SceneFormatError);
  std::string two_egos = minimal_scene();
  two_egos.replace(two_egos.find(agent), agent.size(),
                   R"({"id":1,"kind":"ego","x":0,"y":0,"theta":0,"v":2},)"
                   R"({"id":2,"kind":"ego","x":5,"y":0,"theta":0,"v":2})");
  EXPECT_THROW(parse_scene(two_egos), SceneFormatError);
  EXPECT_THROW(parse_scene("{not json"), SceneFormatError);
  try {
    parse_scene(minimal_scene("3"), 7);
    FAIL();
  } catch (const SceneFormatError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 7:", 0), 0u) << e.what();
  }
}

TEST(SceneIo, JsonRoundTripIsExact) {
  const SceneSequence s = sample_scene();
  const SceneSequence back = parse_scene(scene_to_json(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.ego_id(), std::optional<std::int64_t>(1));
}

TEST(SceneIo, LoadWriteLoadIsByteStable) {
  const auto dir = testing::temp_dir("scene_io");
  write_scenes(dir / "a.jsonl", {sample_scene(), parse_scene(minimal_scene())});
  const auto first = load_scenes(dir / "a.jsonl");
  write_scenes(dir / "b.jsonl", first);
  const auto second = load_scenes(dir / "b.jsonl");
  EXPECT_EQ(first, second);
  std::ifstream a(dir / "a.jsonl"), b(dir / "b.jsonl");
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_THROW(load_scenes(dir / "missing.jsonl"), std::runtime_error);
}

TEST(SceneIo, EgoControlsRoundTrip) {
  const auto dir = testing::temp_dir("ego_controls");
  const std::vector<ControlInput> u = {{0.8, 0.05}, {-1.6, 0.0}, {0.0, -0.5}};
  write_ego_controls(dir / "u.csv", u);
  EXPECT_EQ(load_ego_controls(dir / "u.csv"), u);
  std::ofstream(dir / "bad.csv") << "step,a,omega\n1,0,0\n";
  EXPECT_THROW(load_ego_controls(dir / "bad.csv"), std::runtime_error);
}

}  // namespace
}  // namespace rtgnn
