#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "rtgnn/scenario.hpp"
#include "rtgnn/serialize.hpp"
#include "rtgnn/training.hpp"

namespace rtgnn {
namespace {

using testing::small_config;

GnnConfig toy_lattice_config() {
  GnnConfig c = small_config();
  c.lattice.accel_count = 9;
  c.lattice.omega_count = 9;
  c.cnn_w = {{16, 3}, {32, 3}};
  return c;
}

TEST(Targets, OnLatticeTransitionsRecoverTheirPrimitive) {
  const MotionPrimitiveSet prims;
  const VehicleState x{2.0, -1.0, 0.4, 6.0};
  EXPECT_EQ(target_intention_onehot(x, integrate_unicycle(x, {0, 0}, 0.5), prims).argmax(), 220u);
  const std::size_t i = prims.nearest({0.8, 0.05});
  EXPECT_EQ(prims.control(i), (ControlInput{0.8, 0.05}));
  EXPECT_EQ(target_intention_onehot(x, integrate_unicycle(x, {0.8, 0.05}, 0.5), prims).argmax(), i);
  for (std::size_t k = 0; k < prims.size(); k += 37) {
    const VehicleState next = integrate_unicycle(x, prims.control(k), 0.5);
    EXPECT_EQ(target_intention_onehot(x, next, prims).argmax(), k);
  }
}

TEST(Targets, OffLatticeMatchesBruteForce) {
  const MotionPrimitiveSet prims;
  const VehicleState x{0.0, 0.0, 0.0, 5.0};
  const VehicleState next = integrate_unicycle(x, {0.85, 0.013}, 0.5);
  const TargetSigma sigma;
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const double d = sigma_distance_sq(integrate_unicycle(x, prims.control(i), 0.5), next, sigma);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  EXPECT_EQ(target_intention_onehot(x, next, prims).argmax(), best);
  EXPECT_EQ(target_intention_gaussian(x, next, prims).argmax(), best);
}

TEST(Targets, GaussianRatiosFollowDistances) {
  PrimitiveConfig pc;
  pc.accel_count = 3;
  pc.omega_count = 3;
  const MotionPrimitiveSet prims(pc);
  const VehicleState x{0.0, 0.0, 0.0, 3.0};
  const VehicleState next = integrate_unicycle(x, {1.3, 0.1}, 0.5);
  const TargetSigma wide{1.0, 1.0, 0.5, 2.0};
  const Intention q = target_intention_gaussian(x, next, prims, wide);
  for (std::size_t i = 0; i < prims.size(); ++i) {
    for (std::size_t j = 0; j < prims.size(); ++j) {
      const double di = sigma_distance_sq(integrate_unicycle(x, prims.control(i), 0.5), next, wide);
      const double dj = sigma_distance_sq(integrate_unicycle(x, prims.control(j), 0.5), next, wide);
      EXPECT_NEAR(std::log(q[i] / q[j]), -0.5 * (di - dj), 1e-9);
    }
  }
}

TEST(Targets, SigmaExtremes) {
  const MotionPrimitiveSet prims;
  const VehicleState x{0.0, 0.0, 0.0, 5.0};
  const VehicleState next = integrate_unicycle(x, {-2.4, 0.2}, 0.5);
  const Intention sharp = target_intention_gaussian(x, next, prims);
  EXPECT_EQ(sharp.argmax(), target_intention_onehot(x, next, prims).argmax());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    if (i != sharp.argmax()) EXPECT_LT(sharp[i], sharp[sharp.argmax()]);
  }
  const TargetSigma huge{5e4, 5e4, 1.75e4, 1e5};
  const Intention flat = target_intention_gaussian(x, next, prims, huge);
  for (std::size_t i = 0; i < prims.size(); ++i) EXPECT_NEAR(flat[i], 1.0 / 441.0, 1e-9);
  EXPECT_THROW(target_intention_gaussian(x, next, prims, {0.0, 1.0, 1.0, 1.0}),
               std::invalid_argument);
}

TEST(Schedule, SamplingRateRamp) {
  const TrainConfig c;
  EXPECT_EQ(sampling_rate(1, c), 0.0);
  EXPECT_EQ(sampling_rate(10, c), 0.0);
  EXPECT_DOUBLE_EQ(sampling_rate(20, c), 0.25);
  EXPECT_DOUBLE_EQ(sampling_rate(30, c), 0.5);
  EXPECT_DOUBLE_EQ(sampling_rate(45, c), 0.5);
  for (std::size_t e = 1; e < 50; ++e) EXPECT_LE(sampling_rate(e, c), sampling_rate(e + 1, c));
}

// Agent 2 exists at window steps 3..5 of 8.
TrainingSample partial_presence_sample() {
  TrainingSample s;
  s.id = "partial";
  s.map = testing::test_map();
  s.agent_ids = {1, 2};
  s.kinds = {AgentKind::kVehicle, AgentKind::kVehicle};
  VehicleState a{0.0, -1.75, 0.0, 5.0}, b{10.0, -5.25, 0.0, 4.0};
  const MotionPrimitiveSet prims;
  for (std::size_t t = 0; t < 8; ++t) {
    s.states.push_back({a, (t >= 3 && t <= 5) ? std::optional<VehicleState>(b) : std::nullopt});
    a = integrate_unicycle(a, prims.control(prims.index(11, 10)), 0.5);
    if (t >= 3) b = integrate_unicycle(b, prims.control(prims.index(10, 11)), 0.5);
  }
  return s;
}

TEST(Loss, PartialPresenceCountsOnlyObservedTransitions) {
  const TrainingSample s = partial_presence_sample();
  EXPECT_EQ(s.target_count(), 7u + 2u);
  const GnnConfig model = small_config();
  const ParameterStore p = init_parameters(model, 1);
  std::mt19937_64 rng(0);
  const LossResult r = sequence_loss(p, model, s, TrainConfig{}, {0.0, false, false}, rng);
  EXPECT_EQ(r.terms, 9u);
  EXPECT_GE(r.loss, 0.0);
  EXPECT_TRUE(r.gradient.empty());
}

TEST(Loss, TeacherIntentionsGiveTargetEntropy) {
  const TrainingSample s = partial_presence_sample();
  const GnnConfig model = small_config();
  const ParameterStore p = init_parameters(model, 2);
  TrainConfig tc;
  tc.sigma = {0.5, 0.5, 0.2, 1.0};
  const MotionPrimitiveSet prims;
  double entropy = 0.0;
  for (std::size_t t = 0; t + 1 < s.steps(); ++t) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!s.states[t][k] || !s.states[t + 1][k]) continue;
      const Intention q = target_intention_gaussian(*s.states[t][k], *s.states[t + 1][k], prims, tc.sigma);
      for (const double x : q.probabilities()) {
        if (x > 0.0) entropy -= x * std::log(x);
      }
    }
  }
  std::mt19937_64 rng(0);
  const LossResult r = sequence_loss(p, model, s, tc, {0.0, false, true}, rng);
  EXPECT_NEAR(r.loss, entropy, 1e-9 * std::max(1.0, entropy));
}

TEST(Loss, RejectsShortSamples) {
  TrainingSample s = partial_presence_sample();
  s.states.resize(1);
  const GnnConfig model = small_config();
  std::mt19937_64 rng(0);
  EXPECT_THROW(sequence_loss(init_parameters(model, 1), model, s, {}, {}, rng),
               std::invalid_argument);
}

TEST(Windows, OverlapByOneStep) {
  const SceneSequence scene = generate_scene(ScenarioSpec{ScenarioKind::kLaneChange, 2, 3, 4, 8, 20}, 5, "w");
  TrainConfig tc;
  tc.sequence_length = 8;
  const auto samples = make_training_samples(scene, tc);
  ASSERT_EQ(samples.size(), 3u);  // starts 0, 7, 14
  EXPECT_EQ(samples[0].steps(), 8u);
  EXPECT_EQ(samples[2].steps(), 6u);
  std::size_t transitions = 0;
  for (const auto& s : samples) transitions += s.steps() - 1;
  EXPECT_EQ(transitions, 19u);
}

std::vector<SceneSequence> toy_corpus(std::size_t n, std::uint64_t seed) {
  return generate_corpus(default_scenario_mix(6), n, seed);
}

TrainConfig fast_train_config(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.sequence_length = 4;
  tc.validation_fraction = 0.2;
  tc.seed = 3;
  return tc;
}

TEST(Train, LossDecreasesOnSmallCorpus) {
  const auto corpus = toy_corpus(20, 1);
  TrainOptions opts;
  opts.output_dir = testing::temp_dir("train_decrease");
  const TrainResult r = train(corpus, toy_lattice_config(), fast_train_config(5), opts);
  ASSERT_EQ(r.history.size(), 5u);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  EXPECT_TRUE(std::filesystem::exists(opts.output_dir / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(opts.output_dir / "last.bin"));
  EXPECT_TRUE(std::filesystem::exists(opts.output_dir / "best.bin"));
}

TEST(Train, DeterministicAndResumable) {
  const auto corpus = toy_corpus(8, 2);
  const GnnConfig model = toy_lattice_config();
  TrainOptions a, b, c;
  a.output_dir = testing::temp_dir("train_a");
  b.output_dir = testing::temp_dir("train_b");
  c.output_dir = testing::temp_dir("train_c");
  const TrainResult ra = train(corpus, model, fast_train_config(3), a);
  const TrainResult rb = train(corpus, model, fast_train_config(3), b);
  EXPECT_EQ(ra.final_state.params, rb.final_state.params);
  EXPECT_EQ(ra.final_state.adam, rb.final_state.adam);

  train(corpus, model, fast_train_config(1), c);
  c.resume_from = c.output_dir / "last.bin";
  const TrainResult rc = train(corpus, model, fast_train_config(3), c);
  EXPECT_EQ(rc.final_state.params, ra.final_state.params);
  EXPECT_EQ(rc.final_state.epoch, 3u);
  ASSERT_EQ(rc.history.size(), 2u);
  EXPECT_EQ(rc.history.back().validation_loss, ra.history.back().validation_loss);
}

TEST(Train, EmptyCorpusRejected) {
  TrainOptions opts;
  opts.output_dir = testing::temp_dir("train_empty");
  EXPECT_THROW(train({}, small_config(), fast_train_config(1), opts), std::invalid_argument);
}

TEST(CheckpointTest, RoundTripAndDigestChecks) {
  const GnnConfig model = toy_lattice_config();
  const TrainConfig tc = fast_train_config(2);
  Checkpoint ck;
  ck.params = init_parameters(model, 4);
  ck.epoch = 2;
  ck.best_epoch = 1;
  ck.best_validation_loss = 1.25;
  GradientMap g;
  for (const auto& [name, t] : ck.params.entries()) g[name] = Tensor(t.shape(), 0.01);
  adam_step(ck.params, g, ck.adam);
  const auto dir = testing::temp_dir("checkpoint");
  save_checkpoint(dir / "c.bin", ck, model, tc);
  const Checkpoint back = load_checkpoint(dir / "c.bin", model, &tc);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.adam, ck.adam);
  EXPECT_EQ(back.epoch, 2u);
  EXPECT_EQ(back.best_epoch, 1u);
  EXPECT_EQ(back.best_validation_loss, 1.25);

  EXPECT_THROW(load_checkpoint(dir / "c.bin", small_config()), FormatError);
  TrainConfig other = tc;
  other.learning_rate = 1e-3;
  EXPECT_THROW(load_checkpoint(dir / "c.bin", model, &other), FormatError);
  EXPECT_NO_THROW(load_checkpoint(dir / "c.bin", model));
}

}  // namespace
}  // namespace rtgnn
