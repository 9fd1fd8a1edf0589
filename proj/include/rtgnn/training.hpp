#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rtgnn/dynamics.hpp"
#include "rtgnn/gnn.hpp"
#include "rtgnn/parameters.hpp"
#include "rtgnn/scene.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {

// Per-component scales of the state distance used to build targets.
struct TargetSigma {
  double x = 5e-2;       // m
  double y = 5e-2;       // m
  double theta = 1.75e-2;  // rad
  double v = 0.1;        // m/s

  // Throws std::invalid_argument unless every component is > 0.
  void validate() const;
};

// sum of squared component differences over sigma^2, heading difference
// wrapped to (-pi, pi].
double sigma_distance_sq(const VehicleState& a, const VehicleState& b, const TargetSigma& sigma);

// One-hot on the primitive whose one-step prediction from x_t is closest to
// x_next; lowest index on ties.
Intention target_intention_onehot(const VehicleState& x_t, const VehicleState& x_next,
                                  const MotionPrimitiveSet& prims, const TargetSigma& sigma = {},
                                  const IntegrationOptions& options = {});

// q(i) proportional to exp(-d_i^2 / 2). Distances are shifted by their
// minimum before exponentiating, so the mass cannot underflow; a non-finite
// total falls back to the one-hot target with a warning.
Intention target_intention_gaussian(const VehicleState& x_t, const VehicleState& x_next,
                                    const MotionPrimitiveSet& prims,
                                    const TargetSigma& sigma = {},
                                    const IntegrationOptions& options = {});

enum class TargetKind { kOneHot, kGaussian };

struct TrainConfig {
  double learning_rate = 2e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  std::size_t sequence_length = 8;  // T, steps per training window
  // Scheduled sampling ramps linearly from 0 at ramp_start_epoch to max_rate
  // at ramp_end_epoch.
  std::size_t ramp_start_epoch = 10;
  std::size_t ramp_end_epoch = 30;
  double max_sampling_rate = 0.5;
  double validation_fraction = 0.1;
  TargetKind target = TargetKind::kGaussian;
  TargetSigma sigma;
  RegionConfig region;
  double graph_radius = 25.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Covers every field that changes the optimisation trajectory except the
  // epoch budget, so a run may be extended from its own checkpoint.
  std::string describe() const;
  std::uint64_t digest() const;
};

// Epochs are numbered from 1.
double sampling_rate(std::size_t epoch, const TrainConfig& config = {});

// A window of a scene with agents restricted to the ego region at each step.
struct TrainingSample {
  std::string id;
  SemanticMap map;
  std::vector<std::int64_t> agent_ids;
  std::vector<AgentKind> kinds;
  // states[t][k]: agent k at step t, absent when outside the scene or region.
  std::vector<std::vector<std::optional<VehicleState>>> states;

  std::size_t steps() const { return states.size(); }
  // Number of (t, t+1) pairs with the agent present at both ends; pedestrians
  // contribute none.
  std::size_t target_count() const;
};

// Splits a scene into windows of at most T steps that overlap by one step, so
// every transition lands in exactly one window. The ego defines the region;
// scenes without an ego use the whole snapshot.
std::vector<TrainingSample> make_training_samples(const SceneSequence& scene,
                                                  const TrainConfig& config);

struct LossResult {
  double loss = 0.0;         // sum of cross-entropy terms
  std::size_t terms = 0;
  GradientMap gradient;      // empty unless requested
};

struct SequenceLossOptions {
  double rate = 0.0;  // scheduled-sampling probability
  bool with_gradient = true;
  // Test hook: replaces each predicted intention by its target before it is
  // scored and carried forward.
  bool teacher_intentions = false;
};

// Unrolls the model over the sample. rng is only drawn from when rate > 0.
// Throws std::invalid_argument for samples shorter than 2 steps.
LossResult sequence_loss(const ParameterStore& params, const GnnConfig& model,
                         const TrainingSample& sample, const TrainConfig& config,
                         const SequenceLossOptions& options, std::mt19937_64& rng);

struct Checkpoint {
  ParameterStore params;
  AdamState adam;
  std::size_t epoch = 0;  // last completed epoch
  double best_validation_loss = 0.0;
  std::size_t best_epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const GnnConfig& model, const TrainConfig& train);
// Throws FormatError on a corrupt file or a digest mismatch. The training
// digest is only checked when `train` is given.
Checkpoint load_checkpoint(const std::filesystem::path& path, const GnnConfig& model,
                           const TrainConfig* train = nullptr);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;       // mean per target term
  double validation_loss = 0.0;  // mean per target term, rate 0
  double sampling_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  std::filesystem::path output_dir;  // metrics.csv, epoch_NNN.bin, last.bin, best.bin
  std::optional<std::filesystem::path> resume_from;
  std::uint64_t init_seed = 0;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  Checkpoint final_state;
  std::vector<EpochMetrics> history;
};

// Mini-batch Adam over shuffled windows. The first ceil(fraction * scenes)
// scenes of a seeded permutation are held out for validation. Throws
// std::invalid_argument on an empty corpus and std::runtime_error naming the
// sample when a loss is not finite.
TrainResult train(const std::vector<SceneSequence>& corpus, const GnnConfig& model,
                  const TrainConfig& config, const TrainOptions& options);

// Scene indices in the validation split.
std::vector<std::size_t> validation_scenes(std::size_t scene_count, const TrainConfig& config);

}  // namespace rtgnn
