#include "rtgnn/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rtgnn/serialize.hpp"

namespace rtgnn {
namespace {

std::vector<double> primitive_distances(const VehicleState& x_t, const VehicleState& x_next,
                                        const MotionPrimitiveSet& prims,
                                        const TargetSigma& sigma,
                                        const IntegrationOptions& options) {
  sigma.validate();
  std::vector<double> d(prims.size());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    d[i] = sigma_distance_sq(integrate_unicycle(x_t, prims.control(i), prims.dt(), options),
                             x_next, sigma);
  }
  return d;
}

Intention make_target(TargetKind kind, const VehicleState& x_t, const VehicleState& x_next,
                      const MotionPrimitiveSet& prims, const TrainConfig& config) {
  return kind == TargetKind::kOneHot
             ? target_intention_onehot(x_t, x_next, prims, config.sigma)
             : target_intention_gaussian(x_t, x_next, prims, config.sigma);
}

// Seed stream reserved for the train/validation split.
constexpr std::uint64_t kSplitStream = 0x53504c4954;

std::string checkpoint_param(const std::string& name) { return "param/" + name; }

}  // namespace

void TargetSigma::validate() const {
  if (!(x > 0.0) || !(y > 0.0) || !(theta > 0.0) || !(v > 0.0)) {
    throw std::invalid_argument("TargetSigma: every component must be positive");
  }
}

double sigma_distance_sq(const VehicleState& a, const VehicleState& b, const TargetSigma& sigma) {
  const double dx = (a.x - b.x) / sigma.x;
  const double dy = (a.y - b.y) / sigma.y;
  const double dth = wrap_angle(a.theta - b.theta) / sigma.theta;
  const double dv = (a.v - b.v) / sigma.v;
  return dx * dx + dy * dy + dth * dth + dv * dv;
}

Intention target_intention_onehot(const VehicleState& x_t, const VehicleState& x_next,
                                  const MotionPrimitiveSet& prims, const TargetSigma& sigma,
                                  const IntegrationOptions& options) {
  const auto d = primitive_distances(x_t, x_next, prims, sigma, options);
  const auto best = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
  return Intention::one_hot(prims.size(), best);
}

Intention target_intention_gaussian(const VehicleState& x_t, const VehicleState& x_next,
                                    const MotionPrimitiveSet& prims, const TargetSigma& sigma,
                                    const IntegrationOptions& options) {
  const auto d = primitive_distances(x_t, x_next, prims, sigma, options);
  const auto best = std::min_element(d.begin(), d.end());
  const double floor = *best;
  std::vector<double> q(d.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    q[i] = std::exp(-0.5 * (d[i] - floor));
    total += q[i];
  }
  if (!std::isfinite(total) || !(total > 0.0)) {
    spdlog::warn("gaussian target has no usable mass; using the one-hot target");
    return Intention::one_hot(prims.size(), static_cast<std::size_t>(best - d.begin()));
  }
  for (double& v : q) v /= total;
  return Intention(std::move(q));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (sequence_length < 2) throw std::invalid_argument("sequence_length must be >= 2");
  if (ramp_end_epoch <= ramp_start_epoch) {
    throw std::invalid_argument("ramp_end_epoch must exceed ramp_start_epoch");
  }
  if (!(max_sampling_rate >= 0.0 && max_sampling_rate <= 1.0)) {
    throw std::invalid_argument("max_sampling_rate must lie in [0, 1]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }
  if (!(graph_radius > 0.0)) throw std::invalid_argument("graph_radius must be > 0");
  sigma.validate();
}

std::string TrainConfig::describe() const {
  std::ostringstream out;
  out << std::setprecision(17) << "lr " << learning_rate << ";batch " << batch_size << ";T "
      << sequence_length << ";ramp " << ramp_start_epoch << ' ' << ramp_end_epoch << ' '
      << max_sampling_rate << ";val " << validation_fraction << ";target "
      << (target == TargetKind::kOneHot ? "onehot" : "gaussian") << ";sigma " << sigma.x << ' '
      << sigma.y << ' ' << sigma.theta << ' ' << sigma.v << ";region " << region.ahead << ' '
      << region.behind << ' ' << region.side << ";radius " << graph_radius << ";seed " << seed;
  return out.str();
}

std::uint64_t TrainConfig::digest() const { return fnv1a64(describe()); }

double sampling_rate(std::size_t epoch, const TrainConfig& config) {
  if (epoch <= config.ramp_start_epoch) return 0.0;
  if (epoch >= config.ramp_end_epoch) return config.max_sampling_rate;
  return config.max_sampling_rate * static_cast<double>(epoch - config.ramp_start_epoch) /
         static_cast<double>(config.ramp_end_epoch - config.ramp_start_epoch);
}

std::size_t TrainingSample::target_count() const {
  std::size_t n = 0;
  for (std::size_t t = 0; t + 1 < states.size(); ++t) {
    for (std::size_t k = 0; k < agent_ids.size(); ++k) {
      if (kinds[k] != AgentKind::kPedestrian && states[t][k] && states[t + 1][k]) ++n;
    }
  }
  return n;
}

std::vector<TrainingSample> make_training_samples(const SceneSequence& scene,
                                                  const TrainConfig& config) {
  const std::size_t total = scene.steps.size();
  const auto ego = scene.ego_id();
  std::vector<TrainingSample> samples;
  for (std::size_t w0 = 0; w0 + 2 <= total; w0 += config.sequence_length - 1) {
    const std::size_t len = std::min(config.sequence_length, total - w0);
    TrainingSample sample;
    sample.id = scene.id + "#" + std::to_string(w0);
    sample.map = scene.map;
    std::map<std::int64_t, std::size_t> slot;
    std::vector<std::vector<std::pair<std::size_t, VehicleState>>> present(len);
    for (std::size_t t = 0; t < len; ++t) {
      const SceneStep& step = scene.steps[w0 + t];
      std::vector<AgentState> local;
      if (!ego) {
        local = step.agents;
      } else if (step.find(*ego) != nullptr) {
        local = select_local_agents(step.agents, *ego, config.region);
      }
      for (const AgentState& a : local) {
        auto [it, fresh] = slot.emplace(a.id, sample.agent_ids.size());
        if (fresh) {
          sample.agent_ids.push_back(a.id);
          sample.kinds.push_back(a.kind);
        }
        present[t].emplace_back(it->second, a.state);
      }
    }
    sample.states.assign(len, std::vector<std::optional<VehicleState>>(sample.agent_ids.size()));
    for (std::size_t t = 0; t < len; ++t) {
      for (const auto& [k, s] : present[t]) sample.states[t][k] = s;
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

LossResult sequence_loss(const ParameterStore& params, const GnnConfig& model,
                         const TrainingSample& sample, const TrainConfig& config,
                         const SequenceLossOptions& options, std::mt19937_64& rng) {
  const std::size_t steps = sample.steps();
  if (steps < 2) {
    throw std::invalid_argument("sequence_loss: sample '" + sample.id + "' has " +
                                std::to_string(steps) + " step(s), need at least 2");
  }
  const MotionPrimitiveSet prims(model.lattice);
  const std::size_t m = prims.size();
  GraphConfig graph_config;
  graph_config.radius = config.graph_radius;
  graph_config.raster = model.raster;

  ad::Tape tape(options.with_gradient);
  const ParameterVars vars = bind_parameters(tape, params);
  const std::size_t agents = sample.agent_ids.size();

  std::vector<std::optional<VehicleState>> previous_input(agents);
  std::vector<long> previous_row(agents, -1);
  ad::Var previous_q;
  LossResult result;
  ad::Var total;

  for (std::size_t t = 0; t + 1 < steps; ++t) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < agents; ++k) {
      if (sample.states[t][k]) active.push_back(k);
    }
    std::vector<long> row_of(agents, -1);
    if (active.empty()) {
      previous_row = row_of;
      continue;
    }

    std::vector<AgentState> nodes;
    nodes.reserve(active.size());
    for (const std::size_t k : active) {
      VehicleState input = *sample.states[t][k];
      if (options.rate > 0.0 && previous_row[k] >= 0 && previous_input[k] &&
          uniform_unit(rng) < options.rate) {
        const Tensor& q = tape.value(previous_q);
        const double* row = q.data() + static_cast<std::size_t>(previous_row[k]) * m;
        const std::size_t u = sample_index(std::span(row, m), uniform_unit(rng));
        input = integrate_unicycle(*previous_input[k], prims.control(u), prims.dt());
      }
      row_of[k] = static_cast<long>(nodes.size());
      nodes.push_back(AgentState{sample.agent_ids[k], sample.kinds[k], input, {}});
      previous_input[k] = input;
    }
    const TrafficGraph g = build_graph(nodes, prims, sample.map, graph_config);
    const GraphFeatures features = extract_features(g, model);

    ad::Var q = tape.constant(intention_matrix(g));
    std::vector<bool> carried(active.size(), false);
    std::vector<std::size_t> source(active.size(), 0);
    bool any_carried = false;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t k = active[i];
      if (previous_row[k] >= 0 && sample.kinds[k] != AgentKind::kPedestrian) {
        carried[i] = true;
        source[i] = static_cast<std::size_t>(previous_row[k]);
        any_carried = true;
      }
    }
    if (any_carried) {
      q = ad::select_rows(tape, carried, ad::gather_rows(tape, previous_q, source), q);
    }
    const ForwardVars out = gnn_forward(tape, vars, model, features, q);

    Tensor target({active.size(), m}, 0.0);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t k = active[i];
      if (sample.kinds[k] == AgentKind::kPedestrian || !sample.states[t + 1][k]) continue;
      const Intention q_star =
          make_target(config.target, *sample.states[t][k], *sample.states[t + 1][k], prims, config);
      std::copy(q_star.probabilities().begin(), q_star.probabilities().end(),
                target.data() + i * m);
      rows.push_back(i);
    }

    if (options.teacher_intentions) {
      Tensor carried_q = tape.value(out.intentions);
      double entropy = 0.0;
      for (const std::size_t i : rows) {
        for (std::size_t j = 0; j < m; ++j) {
          const double p = target[i * m + j];
          carried_q[i * m + j] = p;
          if (p > 0.0) entropy -= p * std::log(p);
        }
      }
      const ad::Var term = tape.constant(Tensor::scalar(entropy));
      total = total.valid() ? ad::add(tape, total, term) : term;
      previous_q = tape.constant(std::move(carried_q));
    } else {
      if (!rows.empty()) {
        const ad::Var term = ad::softmax_cross_entropy(tape, out.logits, target, rows);
        total = total.valid() ? ad::add(tape, total, term) : term;
      }
      previous_q = out.intentions;
    }
    result.terms += rows.size();
    previous_row = row_of;
  }

  if (!total.valid()) total = tape.constant(Tensor::scalar(0.0));
  result.loss = tape.value(total).item();
  if (options.with_gradient) {
    tape.backward(total);
    for (const auto& [name, var] : vars) {
      const Tensor* g = tape.grad(var);
      result.gradient.emplace(name, g != nullptr ? *g : Tensor(params.at(name).shape(), 0.0));
    }
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const GnnConfig& model, const TrainConfig& train) {
  CheckpointContainer c;
  c.model_digest = model.digest();
  c.train_digest = train.digest();
  for (const auto& [name, t] : checkpoint.params.entries()) {
    c.tensors.emplace_back(checkpoint_param(name), t);
  }
  for (const auto& [name, t] : checkpoint.adam.first_moment) c.tensors.emplace_back("adam/m/" + name, t);
  for (const auto& [name, t] : checkpoint.adam.second_moment) c.tensors.emplace_back("adam/v/" + name, t);
  const AdamHyper& h = checkpoint.adam.hyper;
  c.tensors.emplace_back("meta/adam_hyper",
                         Tensor({4}, {h.learning_rate, h.beta1, h.beta2, h.epsilon}));
  c.tensors.emplace_back("meta/adam_step",
                         Tensor::scalar(static_cast<double>(checkpoint.adam.step)));
  c.tensors.emplace_back("meta/epoch", Tensor::scalar(static_cast<double>(checkpoint.epoch)));
  c.tensors.emplace_back("meta/best_validation_loss",
                         Tensor::scalar(checkpoint.best_validation_loss));
  c.tensors.emplace_back("meta/best_epoch",
                         Tensor::scalar(static_cast<double>(checkpoint.best_epoch)));
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const GnnConfig& model,
                           const TrainConfig* train) {
  const CheckpointContainer c = read_container(path);
  if (c.model_digest != model.digest()) {
    throw FormatError("checkpoint '" + path.string() +
                      "' was written for a different model configuration (digest mismatch)");
  }
  if (train != nullptr && c.train_digest != train->digest()) {
    throw FormatError("checkpoint '" + path.string() +
                      "' was written for a different training configuration (digest mismatch)");
  }
  Checkpoint out;
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("param/", 0) == 0) {
      out.params.add(name.substr(6), t);
    } else if (name.rfind("adam/m/", 0) == 0) {
      out.adam.first_moment.emplace(name.substr(7), t);
    } else if (name.rfind("adam/v/", 0) == 0) {
      out.adam.second_moment.emplace(name.substr(7), t);
    }
  }
  try {
    check_parameters(out.params, model);
  } catch (const std::invalid_argument& e) {
    throw FormatError("checkpoint '" + path.string() + "': " + e.what());
  }
  const Tensor& h = c.find("meta/adam_hyper");
  if (h.size() != 4) throw FormatError("checkpoint: meta/adam_hyper must hold 4 values");
  out.adam.hyper = {h[0], h[1], h[2], h[3]};
  out.adam.step = static_cast<std::uint64_t>(c.find("meta/adam_step").item());
  out.epoch = static_cast<std::size_t>(c.find("meta/epoch").item());
  out.best_validation_loss = c.find("meta/best_validation_loss").item();
  out.best_epoch = static_cast<std::size_t>(c.find("meta/best_epoch").item());
  return out;
}

std::vector<std::size_t> validation_scenes(std::size_t scene_count, const TrainConfig& config) {
  if (scene_count < 2) return {};
  std::vector<std::size_t> order(scene_count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, kSplitStream));
  std::shuffle(order.begin(), order.end(), rng);
  auto n = static_cast<std::size_t>(
      std::ceil(config.validation_fraction * static_cast<double>(scene_count)));
  n = std::min(n, scene_count - 1);
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

TrainResult train(const std::vector<SceneSequence>& corpus, const GnnConfig& model,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  model.validate();
  if (corpus.empty()) throw std::invalid_argument("train: corpus is empty");

  const auto held_out = validation_scenes(corpus.size(), config);
  std::vector<TrainingSample> train_set, validation_set;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto windows = make_training_samples(corpus[i], config);
    auto& dst = std::binary_search(held_out.begin(), held_out.end(), i) ? validation_set : train_set;
    for (auto& w : windows) dst.push_back(std::move(w));
  }
  if (train_set.empty()) throw std::invalid_argument("train: no training windows in corpus");
  if (validation_set.empty()) {
    spdlog::warn("no validation windows; validation loss mirrors training loss");
  }

  Checkpoint state;
  if (options.resume_from) {
    state = load_checkpoint(*options.resume_from, model, &config);
    spdlog::info("resuming after epoch {} from {}", state.epoch, options.resume_from->string());
  } else {
    state.params = init_parameters(model, options.init_seed);
    state.adam.hyper.learning_rate = config.learning_rate;
    state.best_validation_loss = std::numeric_limits<double>::infinity();
  }

  std::filesystem::create_directories(options.output_dir);
  const auto metrics_path = options.output_dir / "metrics.csv";
  const bool append = options.resume_from.has_value() && std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open '" + metrics_path.string() + "'");
  if (!append) metrics << "epoch,split,loss,wall_time,sampling_rate\n";
  metrics << std::setprecision(17);

  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const double rate = sampling_rate(epoch, config);
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, epoch));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t epoch_terms = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      GradientMap batch_grad;
      std::size_t batch_terms = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        const TrainingSample& sample = train_set[order[b]];
        std::mt19937_64 rng(derive_seed(derive_seed(config.seed, epoch), order[b]));
        SequenceLossOptions opts;
        opts.rate = rate;
        LossResult r = sequence_loss(state.params, model, sample, config, opts, rng);
        if (!std::isfinite(r.loss)) {
          throw std::runtime_error("non-finite loss on training sample '" + sample.id + "'");
        }
        epoch_loss += r.loss;
        batch_terms += r.terms;
        for (auto& [name, g] : r.gradient) {
          auto [it, fresh] = batch_grad.try_emplace(name, std::move(g));
          if (!fresh) {
            auto dst = it->second.values();
            auto src = r.gradient.at(name).values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      if (batch_terms == 0) continue;
      const double inv = 1.0 / static_cast<double>(batch_terms);
      for (auto& [name, g] : batch_grad) {
        for (double& v : g.values()) v *= inv;
      }
      adam_step(state.params, batch_grad, state.adam);
      epoch_terms += batch_terms;
    }
    const double train_loss =
        epoch_terms > 0 ? epoch_loss / static_cast<double>(epoch_terms) : 0.0;

    double val_loss = train_loss;
    if (!validation_set.empty()) {
      double sum = 0.0;
      std::size_t terms = 0;
      std::mt19937_64 unused(0);
      for (const TrainingSample& sample : validation_set) {
        SequenceLossOptions opts;
        opts.with_gradient = false;
        const LossResult r = sequence_loss(state.params, model, sample, config, opts, unused);
        if (!std::isfinite(r.loss)) {
          throw std::runtime_error("non-finite loss on validation sample '" + sample.id + "'");
        }
        sum += r.loss;
        terms += r.terms;
      }
      val_loss = terms > 0 ? sum / static_cast<double>(terms) : 0.0;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics << epoch << ",train," << train_loss << ',' << wall << ',' << rate << '\n'
            << epoch << ",validation," << val_loss << ',' << wall << ',' << rate << '\n';
    metrics.flush();

    state.epoch = epoch;
    const bool improved = val_loss < state.best_validation_loss;
    if (improved) {
      state.best_validation_loss = val_loss;
      state.best_epoch = epoch;
    }
    std::ostringstream name;
    name << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".bin";
    save_checkpoint(options.output_dir / name.str(), state, model, config);
    save_checkpoint(options.output_dir / "last.bin", state, model, config);
    if (improved) save_checkpoint(options.output_dir / "best.bin", state, model, config);

    const EpochMetrics em{epoch, train_loss, val_loss, rate, wall};
    result.history.push_back(em);
    spdlog::info("epoch {:3d}  train {:.5f}  validation {:.5f}  rate {:.3f}  {:.1f}s", epoch,
                 train_loss, val_loss, rate, wall);
    if (options.on_epoch) options.on_epoch(em);
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace rtgnn
