#include "rtgnn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "rtgnn/rollout.hpp"
#include "rtgnn/scenario.hpp"
#include "rtgnn/scene.hpp"
#include "rtgnn/serialize.hpp"
#include "rtgnn/simd/kernels.hpp"
#include "rtgnn/svg.hpp"
#include "rtgnn/training.hpp"

namespace rtgnn {
namespace {

using nlohmann::json;

// Bad flags, bad configuration or missing inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  std::string out;
  for (const char c : text) {
    if (c == '\n') {
      out += "; ";
    } else if (c != '\r') {
      out += c;
    }
  }
  return out;
}

// Configuration values reachable from both the command line and the JSON
// config file. A flag given on the command line wins over the file.
class Settings {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& flags, T& var, const std::string& key,
                      const std::string& help) {
    CLI::Option* o = app->add_option(flags, var, help)->capture_default_str();
    bind(key, o, var);
    return o;
  }

  template <class T>
  void file_only(const std::string& key, T& var) {
    bind(key, nullptr, var);
  }

  void custom(const std::string& key, std::function<void(const json&)> set,
              std::function<json()> get) {
    bindings_[key].push_back({nullptr, std::move(set), std::move(get)});
  }

  // `flat` maps dotted keys to values.
  void apply(const std::map<std::string, json>& flat) {
    for (const auto& [key, value] : flat) {
      const auto it = bindings_.find(key);
      if (it == bindings_.end()) throw UsageError("unknown config key '" + key + "'");
      const bool on_command_line = std::any_of(it->second.begin(), it->second.end(),
                                               [](const Binding& b) {
                                                 return b.opt != nullptr && b.opt->count() > 0;
                                               });
      if (on_command_line) continue;
      try {
        for (const Binding& b : it->second) b.set(value);
      } catch (const json::exception& e) {
        throw UsageError("config key '" + key + "': " + e.what());
      }
    }
  }

  // Nested by the dotted key path, so the result loads back through --config.
  json effective() const {
    json out = json::object();
    for (const auto& [key, list] : bindings_) {
      std::string pointer = "/" + key;
      std::replace(pointer.begin(), pointer.end(), '.', '/');
      out[json::json_pointer(pointer)] = list.front().get();
    }
    return out;
  }

 private:
  struct Binding {
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };

  template <class T>
  void bind(const std::string& key, CLI::Option* opt, T& var) {
    bindings_[key].push_back({opt, [&var](const json& j) { var = j.get<T>(); },
                              [&var] { return json(var); }});
  }

  std::map<std::string, std::vector<Binding>> bindings_;
};

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out[prefix] = j;
  }
}

std::map<std::string, json> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw UsageError("config file '" + path + "' must hold a JSON object");
  std::map<std::string, json> flat;
  flatten(doc, "", flat);
  return flat;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(what + " '" + path + "' does not exist");
  }
}

json conv_to_json(const std::vector<ConvSpec>& specs) {
  json out = json::array();
  for (const ConvSpec& s : specs) out.push_back({s.filters, s.kernel});
  return out;
}

std::vector<ConvSpec> conv_from_json(const json& j) {
  std::vector<ConvSpec> out;
  for (const json& e : j) {
    if (!e.is_array() || e.size() != 2) throw UsageError("conv layers are [filters, kernel] pairs");
    out.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
  }
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[24];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

const SceneSequence& find_scene(const std::vector<SceneSequence>& corpus, const std::string& id) {
  for (const SceneSequence& s : corpus) {
    if (s.id == id) return s;
  }
  throw UsageError("scene '" + id + "' is not in the corpus");
}

std::string safe_file_name(const std::string& id) {
  std::string out;
  for (const char c : id) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  }
  return out.empty() ? "scene" : out;
}

struct Vars {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir;
  bool quiet = false;
  std::string simd = "auto";

  GnnConfig model;
  TrainConfig train;
  EvalConfig eval;
  double graph_radius = 25.0;
  std::string target = "gaussian";

  // gen
  std::size_t gen_count = 500;
  std::vector<std::string> gen_kinds;
  ScenarioSpec gen_spec;
  std::string gen_output;

  std::string corpus;
  std::string checkpoint;
  std::string resume;
  std::string predictions;
  std::string output;
  std::string conditional_file;
  std::string scene;
  std::string table;
  bool ml = false;
  bool eval_conditional = false;
  std::size_t samples = 0;
  std::size_t eval_samples = 5;

  double tolerance = 1e-4;
  GradCheckOptions gradcheck;
};

std::filesystem::path out_path(const Vars& v, const std::string& explicit_path,
                               const std::string& default_name) {
  if (!explicit_path.empty()) return explicit_path;
  return std::filesystem::path(v.out_dir) / default_name;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

Checkpoint load_model(const Vars& v) {
  require_file(v.checkpoint, "--checkpoint");
  return load_checkpoint(v.checkpoint, v.model);
}

int cmd_gen(const Vars& v, std::ostream& out) {
  std::vector<std::string> kinds = v.gen_kinds;
  if (kinds.empty()) {
    for (const ScenarioSpec& s : default_scenario_mix()) kinds.push_back(to_string(s.kind));
  }
  std::vector<ScenarioSpec> specs;
  for (const std::string& k : kinds) {
    ScenarioSpec s = v.gen_spec;
    try {
      s.kind = scenario_kind_from_string(k);
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    specs.push_back(s);
  }
  const auto corpus = generate_corpus(specs, v.gen_count, v.seed);
  const auto path = out_path(v, v.gen_output, "corpus.jsonl");
  ensure_parent(path);
  write_scenes(path, corpus);
  out << "wrote " << corpus.size() << " scenes to " << path.string() << " (digest "
      << file_digest(path) << ")\n";
  return kExitOk;
}

int cmd_train(const Vars& v, const Settings& settings, std::ostream& out) {
  require_file(v.corpus, "--corpus");
  if (!v.resume.empty()) require_file(v.resume, "--resume");
  const auto corpus = load_scenes(v.corpus);
  TrainOptions options;
  options.output_dir = v.out_dir;
  options.init_seed = v.seed;
  if (!v.resume.empty()) options.resume_from = v.resume;
  std::filesystem::create_directories(options.output_dir);
  {
    std::ofstream cfg(options.output_dir / "config.json", std::ios::trunc);
    cfg << settings.effective().dump(2) << '\n';
  }
  const TrainResult result = train(corpus, v.model, v.train, options);
  for (const EpochMetrics& m : result.history) {
    out << "epoch " << m.epoch << " train " << m.train_loss << " validation " << m.validation_loss
        << " rate " << m.sampling_rate << '\n';
  }
  out << "best epoch " << result.final_state.best_epoch << " validation loss "
      << result.final_state.best_validation_loss << "; checkpoints in "
      << options.output_dir.string() << '\n';
  return kExitOk;
}

std::vector<const SceneSequence*> selected_scenes(const std::vector<SceneSequence>& corpus,
                                                  const std::string& id) {
  std::vector<const SceneSequence*> out;
  if (!id.empty()) {
    out.push_back(&find_scene(corpus, id));
  } else {
    for (const SceneSequence& s : corpus) out.push_back(&s);
  }
  return out;
}

int cmd_predict(const Vars& v, std::ostream& out) {
  require_file(v.corpus, "--corpus");
  if (!v.conditional_file.empty()) require_file(v.conditional_file, "--conditional");
  const auto corpus = load_scenes(v.corpus);
  const Checkpoint ck = load_model(v);
  const ModelRef model{ck.params, v.model};
  EvalConfig cfg = v.eval;
  cfg.seed = v.seed;
  cfg.samples = v.samples;
  if (!v.conditional_file.empty()) {
    cfg.conditional = true;
    cfg.ego_controls = load_ego_controls(v.conditional_file);
  }
  const bool want_ml = v.ml || v.samples == 0;
  std::vector<ScenePrediction> preds;
  for (const SceneSequence* scene : selected_scenes(corpus, v.scene)) {
    if (cfg.conditional && !scene->ego_id()) {
      throw std::runtime_error("scene '" + scene->id + "' has no ego; cannot condition on it");
    }
    ScenePrediction p = predict_scene(model, *scene, cfg);
    if (!want_ml) p.ml = {};
    preds.push_back(std::move(p));
  }
  const auto path = out_path(v, v.output, "predictions.csv");
  ensure_parent(path);
  write_predictions_csv(path, preds);
  out << "wrote predictions for " << preds.size() << " scenes to " << path.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Vars& v, std::ostream& out) {
  require_file(v.corpus, "--corpus");
  const auto corpus = load_scenes(v.corpus);
  std::vector<ScenePrediction> preds;
  if (!v.predictions.empty()) {
    require_file(v.predictions, "--predictions");
    preds = read_predictions_csv(v.predictions);
    for (ScenePrediction& p : preds) {
      const SceneSequence& scene = find_scene(corpus, p.scene_id);
      const Trajectory* ref = !p.ml.agent_ids.empty()          ? &p.ml
                              : !p.const_vel.agent_ids.empty() ? &p.const_vel
                              : !p.samples.empty()             ? &p.samples.front()
                                                               : nullptr;
      if (ref == nullptr) {
        p.truth = {};
        continue;
      }
      p.truth = truth_trajectory(scene, p.t0, ref->horizon(), ref->agent_ids);
      if (p.truth.agent_ids.size() != ref->agent_ids.size()) {
        throw std::runtime_error("scene '" + p.scene_id +
                                 "': predicted agents are missing from the ground truth");
      }
    }
  } else {
    const Checkpoint ck = load_model(v);
    const ModelRef model{ck.params, v.model};
    EvalConfig cfg = v.eval;
    cfg.seed = v.seed;
    cfg.samples = v.eval_samples;
    cfg.conditional = v.eval_conditional;
    std::size_t skipped = 0;
    for (const SceneSequence* scene : selected_scenes(corpus, v.scene)) {
      if (scene->steps.size() <= cfg.history + cfg.horizon || (cfg.conditional && !scene->ego_id())) {
        ++skipped;
        continue;
      }
      preds.push_back(predict_scene(model, *scene, cfg));
    }
    if (skipped > 0) spdlog::warn("skipped {} scenes too short or without an ego", skipped);
  }
  const auto rows = evaluate(preds, 5);
  out << format_table(rows);
  const auto path = out_path(v, v.table, "eval_table.csv");
  ensure_parent(path);
  write_table_csv(path, rows);
  return kExitOk;
}

int cmd_plot(const Vars& v, std::ostream& out) {
  require_file(v.corpus, "--corpus");
  require_file(v.predictions, "--predictions");
  const auto corpus = load_scenes(v.corpus);
  const auto preds = read_predictions_csv(v.predictions);
  const std::filesystem::path dir =
      v.output.empty() ? std::filesystem::path(v.out_dir) / "plots" : std::filesystem::path(v.output);
  std::filesystem::create_directories(dir);
  std::size_t written = 0;
  for (const ScenePrediction& p : preds) {
    if (!v.scene.empty() && p.scene_id != v.scene) continue;
    const auto path = dir / (safe_file_name(p.scene_id) + ".svg");
    std::ofstream svg(path, std::ios::trunc);
    svg << render_svg(find_scene(corpus, p.scene_id), p);
    ++written;
  }
  if (!v.scene.empty() && written == 0) {
    throw UsageError("scene '" + v.scene + "' has no predictions");
  }
  out << "wrote " << written << " SVG files to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Vars& v, std::ostream& out) {
  const GradCheckReport r = sequence_gradcheck(v.model, v.gradcheck, v.seed);
  const bool pass = r.max_relative_error < v.tolerance;
  out << "gradcheck: max relative error " << r.max_relative_error << " at " << r.worst_parameter
      << "[" << r.worst_index << "] over " << r.coordinates_checked << " coordinates (tolerance "
      << v.tolerance << "): " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitFailure;
}

int cmd_info(const Vars& v, std::ostream& out) {
  v.model.validate();
  out << "model: " << v.model.describe() << '\n';
  for (const TensorSpec& t : parameter_layout(v.model)) {
    std::size_t n = 1;
    std::string shape;
    for (const std::size_t d : t.shape) {
      n *= d;
      shape += (shape.empty() ? "" : "x") + std::to_string(d);
    }
    out << "  " << t.name << " [" << shape << "] " << n << '\n';
  }
  out << "parameters: " << parameter_count(v.model) << " (reference " << kReferenceParameterCount
      << ")\n";
  out << "simd: " << simd::level_name(simd::kernels().level) << '\n';
  return kExitOk;
}

}  // namespace

GradCheckReport sequence_gradcheck(const GnnConfig& model, const GradCheckOptions& options,
                                   std::uint64_t seed) {
  // Two vehicles close enough to exchange messages, one primitive each.
  const MotionPrimitiveSet prims(model.lattice);
  SceneSequence scene;
  scene.id = "gradcheck";
  Lane lane;
  for (int i = 0; i <= 20; ++i) {
    lane.points.push_back({-20.0 + 4.0 * i, 0.0});
    lane.headings.push_back(0.0);
  }
  scene.map.lanes.push_back(lane);
  scene.map.drivable.push_back({{-20.0, -3.5}, {60.0, -3.5}, {60.0, 3.5}, {-20.0, 3.5}});
  const std::vector<AgentState> start = {
      {1, AgentKind::kEgo, {0.0, 0.0, 0.0, 5.0}, {}},
      {2, AgentKind::kVehicle, {12.0, 1.5, 0.1, 6.0}, {}},
  };
  const std::size_t controls[2] = {prims.index(prims.accel_count() / 2 + 1, prims.omega_count() / 2),
                                   prims.index(prims.accel_count() / 2, prims.omega_count() / 2 - 2)};
  SceneStep s0{0.0, start};
  SceneStep s1{kSceneStepSeconds, start};
  for (std::size_t k = 0; k < 2; ++k) {
    s1.agents[k].state = integrate_unicycle(start[k].state, prims.control(controls[k]), prims.dt());
  }
  scene.steps = {s0, s1};

  TrainConfig tc;
  tc.sequence_length = 2;
  const auto samples = make_training_samples(scene, tc);
  const TrainingSample sample = samples.front();
  const ParameterStore params = init_parameters(model, seed);
  const Objective f = [&](const ParameterStore& p, bool with_gradient) {
    std::mt19937_64 rng(seed);
    SequenceLossOptions o;
    o.with_gradient = with_gradient;
    LossResult r = sequence_loss(p, model, sample, tc, o, rng);
    return Evaluation{r.loss, std::move(r.gradient)};
  };
  return finite_difference_check(f, params, options);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Vars v;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
    v.out_dir = env;
  } else {
    v.out_dir = "rtgnn_out";
  }
  Settings s;
  CLI::App app{"Intention-dynamics GNN for traffic prediction: generate, train, predict, evaluate"};
  app.name("rtgnn");
  app.require_subcommand(1);
  app.fallthrough();

  s.option(&app, "--seed", v.seed, "seed", "Seed for every random stream");
  app.add_option("--config", v.config_path, "JSON config file; command-line flags override it");
  s.option(&app, "--out-dir", v.out_dir, "out_dir",
           std::string("Output directory (default from ") + kOutDirEnv + ")");
  app.add_flag("--quiet", v.quiet, "Only log warnings and errors");
  app.add_option("--simd", v.simd, "Kernel set")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  // Model shape, shared by every subcommand that touches a model.
  s.option(&app, "--iterations", v.model.iterations, "model.iterations", "Message-passing rounds K");
  s.option(&app, "--raster-cells", v.model.raster.cells, "model.raster.cells", "Map raster side");
  s.option(&app, "--raster-resolution", v.model.raster.resolution, "model.raster.resolution",
           "Map raster metres per cell");
  s.file_only("model.lattice.accel_count", v.model.lattice.accel_count);
  s.file_only("model.lattice.accel_min", v.model.lattice.accel_min);
  s.file_only("model.lattice.accel_max", v.model.lattice.accel_max);
  s.file_only("model.lattice.omega_count", v.model.lattice.omega_count);
  s.file_only("model.lattice.omega_min", v.model.lattice.omega_min);
  s.file_only("model.lattice.omega_max", v.model.lattice.omega_max);
  s.file_only("model.raster.lane_half_width", v.model.raster.lane_half_width);
  s.file_only("model.map_split", v.model.map_split);
  s.file_only("model.mlp_m_hidden", v.model.mlp_m_hidden);
  s.file_only("model.message_width", v.model.message_width);
  s.file_only("model.mlp_q_hidden", v.model.mlp_q_hidden);
  s.file_only("model.slope", v.model.slope);
  s.file_only("model.position_scale", v.model.position_scale);
  s.file_only("model.speed_scale", v.model.speed_scale);
  s.custom("model.cnn_w", [&](const json& j) { v.model.cnn_w = conv_from_json(j); },
           [&] { return conv_to_json(v.model.cnn_w); });
  s.custom("model.cnn_m", [&](const json& j) { v.model.cnn_m = conv_from_json(j); },
           [&] { return conv_to_json(v.model.cnn_m); });
  s.option(&app, "--graph-radius", v.graph_radius, "graph_radius", "Edge radius in metres");
  s.file_only("region.ahead", v.train.region.ahead);
  s.file_only("region.behind", v.train.region.behind);
  s.file_only("region.side", v.train.region.side);

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic scene corpus (JSON lines)");
  s.option(gen, "-n,--count", v.gen_count, "gen.count", "Number of scenes");
  s.option(gen, "--kinds", v.gen_kinds, "gen.kinds",
           "Scenario kinds (car_following,intersection,lane_change,parked_merge,pedestrian_cross)")
      ->delimiter(',');
  s.option(gen, "--steps", v.gen_spec.steps, "gen.steps", "Snapshots per scene");
  s.option(gen, "--min-agents", v.gen_spec.min_agents, "gen.min_agents", "Fewest vehicles");
  s.option(gen, "--max-agents", v.gen_spec.max_agents, "gen.max_agents", "Most vehicles");
  s.option(gen, "--min-speed", v.gen_spec.min_speed, "gen.min_speed", "Lowest speed, m/s");
  s.option(gen, "--max-speed", v.gen_spec.max_speed, "gen.max_speed", "Highest speed, m/s");
  s.option(gen, "-o,--output", v.gen_output, "gen.output", "Corpus path (default <out-dir>/corpus.jsonl)");

  CLI::App* tr = app.add_subcommand("train", "Train on a corpus; writes checkpoints and metrics.csv");
  s.option(tr, "--corpus", v.corpus, "corpus", "Scene corpus");
  s.option(tr, "--epochs", v.train.epochs, "train.epochs", "Epochs");
  s.option(tr, "--lr", v.train.learning_rate, "train.learning_rate", "Adam learning rate");
  s.option(tr, "--batch-size", v.train.batch_size, "train.batch_size", "Windows per batch");
  s.option(tr, "--sequence-length", v.train.sequence_length, "train.sequence_length",
           "Steps per training window");
  s.option(tr, "--ramp-start", v.train.ramp_start_epoch, "train.ramp_start_epoch",
           "Epoch where scheduled sampling starts");
  s.option(tr, "--ramp-end", v.train.ramp_end_epoch, "train.ramp_end_epoch",
           "Epoch where scheduled sampling peaks");
  s.option(tr, "--max-rate", v.train.max_sampling_rate, "train.max_sampling_rate",
           "Peak scheduled-sampling rate");
  s.option(tr, "--validation-fraction", v.train.validation_fraction, "train.validation_fraction",
           "Share of scenes held out");
  s.option(tr, "--target", v.target, "train.target", "Target distribution")
      ->check(CLI::IsMember({"gaussian", "onehot"}));
  s.option(tr, "--resume", v.resume, "train.resume", "Checkpoint to resume from");

  CLI::App* pr = app.add_subcommand("predict", "Roll the model out and write a predictions CSV");
  s.option(pr, "--corpus", v.corpus, "corpus", "Scene corpus");
  s.option(pr, "--checkpoint", v.checkpoint, "checkpoint", "Trained checkpoint");
  pr->add_flag("--ml", v.ml, "Max-likelihood rollout (default when --samples is absent)");
  pr->add_option("--samples", v.samples, "Sampled rollouts per scene");
  pr->add_option("--conditional", v.conditional_file,
                 "Planned ego controls (CSV step,a,omega), one per horizon step");
  s.option(pr, "--scene", v.scene, "scene", "Only this scene id");
  s.option(pr, "--history", v.eval.history, "eval.history", "Observed steps before prediction");
  s.option(pr, "--horizon", v.eval.horizon, "eval.horizon", "Predicted steps");
  pr->add_option("-o,--output", v.output, "Predictions CSV (default <out-dir>/predictions.csv)");

  CLI::App* ev = app.add_subcommand("eval", "ADE/FDE/min5 table over 1-4 s horizons");
  s.option(ev, "--corpus", v.corpus, "corpus", "Scene corpus");
  s.option(ev, "--checkpoint", v.checkpoint, "checkpoint", "Trained checkpoint");
  ev->add_option("--predictions", v.predictions,
                 "Score this predictions CSV instead of running the model");
  s.option(ev, "--samples", v.eval_samples, "eval.samples", "Sampled rollouts per scene");
  s.option(ev, "--conditional", v.eval_conditional, "eval.conditional",
           "Condition on the ego's observed controls");
  s.option(ev, "--scene", v.scene, "scene", "Only this scene id");
  s.option(ev, "--history", v.eval.history, "eval.history", "Observed steps before prediction");
  s.option(ev, "--horizon", v.eval.horizon, "eval.horizon", "Predicted steps");
  ev->add_option("--table", v.table, "Table CSV (default <out-dir>/eval_table.csv)");

  CLI::App* pl = app.add_subcommand("plot", "Render predictions over the map as SVG");
  s.option(pl, "--corpus", v.corpus, "corpus", "Scene corpus");
  pl->add_option("--predictions", v.predictions, "Predictions CSV");
  s.option(pl, "--scene", v.scene, "scene", "Only this scene id");
  pl->add_option("-o,--output-dir", v.output, "SVG directory (default <out-dir>/plots)");

  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of the sequence loss");
  gc->add_option("--tolerance", v.tolerance, "Largest accepted relative error")->capture_default_str();
  gc->add_option("--step", v.gradcheck.step, "Central-difference step")->capture_default_str();
  gc->add_option("--coordinates", v.gradcheck.coordinates_per_tensor,
                 "Coordinates probed per parameter tensor")
      ->capture_default_str();

  CLI::App* info = app.add_subcommand("info", "Print the model layout and parameter count");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "rtgnn: error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (!v.config_path.empty()) s.apply(load_config_file(v.config_path));
    spdlog::set_level(v.quiet ? spdlog::level::warn : spdlog::level::info);
    if (v.simd == "scalar") simd::set_level(simd::Level::kScalar);
    if (v.simd == "avx2") simd::set_level(simd::Level::kAvx2);
    v.train.seed = v.seed;
    v.train.graph_radius = v.graph_radius;
    v.train.target = v.target == "onehot" ? TargetKind::kOneHot : TargetKind::kGaussian;
    v.eval.graph.radius = v.graph_radius;
    v.eval.region = v.train.region;
    try {
      v.model.validate();
      v.train.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    if (gen->parsed()) return cmd_gen(v, out);
    if (tr->parsed()) return cmd_train(v, s, out);
    if (pr->parsed()) return cmd_predict(v, out);
    if (ev->parsed()) return cmd_eval(v, out);
    if (pl->parsed()) return cmd_plot(v, out);
    if (gc->parsed()) return cmd_gradcheck(v, out);
    if (info->parsed()) return cmd_info(v, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "rtgnn: error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "rtgnn: error: " << one_line(e.what()) << '\n';
    return kExitFailure;
  }
}

}  // namespace rtgnn
