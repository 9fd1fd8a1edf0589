#include "rtgnn/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rtgnn/training.hpp"

namespace rtgnn {
namespace {

std::map<std::int64_t, std::size_t> index_of(const Trajectory& t) {
  std::map<std::int64_t, std::size_t> idx;
  for (std::size_t k = 0; k < t.agent_ids.size(); ++k) idx.emplace(t.agent_ids[k], k);
  return idx;
}

void check_comparable(const Trajectory& pred, const Trajectory& truth) {
  if (truth.agent_ids.empty()) throw std::invalid_argument("metric: truth has no agents");
  if (pred.horizon() != truth.horizon()) {
    throw std::invalid_argument("metric: horizon mismatch (" + std::to_string(pred.horizon()) +
                                " vs " + std::to_string(truth.horizon()) + ")");
  }
  if (pred.agent_ids.size() != truth.agent_ids.size()) {
    throw std::invalid_argument("metric: agent count mismatch");
  }
}

double dist(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Per-agent displacement error aligned with truth.agent_ids.
std::vector<double> per_agent_error(const Trajectory& pred, const Trajectory& truth, bool final_only) {
  check_comparable(pred, truth);
  const auto idx = index_of(pred);
  std::vector<double> err(truth.agent_ids.size());
  const std::size_t h = truth.horizon();
  for (std::size_t k = 0; k < truth.agent_ids.size(); ++k) {
    const auto it = idx.find(truth.agent_ids[k]);
    if (it == idx.end()) {
      throw std::invalid_argument("metric: agent " + std::to_string(truth.agent_ids[k]) +
                                  " missing from prediction");
    }
    const auto& p = pred.waypoints[it->second];
    const auto& q = truth.waypoints[k];
    if (final_only) {
      err[k] = dist(p[h - 1], q[h - 1]);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < h; ++i) s += dist(p[i], q[i]);
      err[k] = s / static_cast<double>(h);
    }
  }
  return err;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double min_k(const std::vector<Trajectory>& preds, const Trajectory& truth, std::size_t k,
             bool final_only) {
  if (k == 0 || preds.size() < k) {
    throw std::invalid_argument("min_k: need at least k = " + std::to_string(k) +
                                " predictions, got " + std::to_string(preds.size()));
  }
  std::vector<double> best(truth.agent_ids.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < k; ++j) {
    const auto err = per_agent_error(preds[j], truth, final_only);
    for (std::size_t a = 0; a < err.size(); ++a) best[a] = std::min(best[a], err[a]);
  }
  return mean(best);
}

}  // namespace

Trajectory Trajectory::prefix(std::size_t steps) const {
  if (steps > horizon()) throw std::invalid_argument("Trajectory::prefix beyond horizon");
  Trajectory out;
  out.agent_ids = agent_ids;
  for (const auto& w : waypoints) out.waypoints.emplace_back(w.begin(), w.begin() + steps);
  return out;
}

Trajectory Trajectory::select(const std::vector<std::int64_t>& ids) const {
  const auto idx = index_of(*this);
  Trajectory out;
  for (const std::int64_t id : ids) {
    const auto it = idx.find(id);
    if (it == idx.end()) {
      throw std::invalid_argument("Trajectory::select: no agent " + std::to_string(id));
    }
    out.agent_ids.push_back(id);
    out.waypoints.push_back(waypoints[it->second]);
  }
  return out;
}

std::vector<Trajectory> rollout(const ModelRef& model, const TrafficGraph& g0,
                                const SemanticMap& map, const RolloutConfig& config,
                                const GraphConfig& graph_config) {
  if (config.ego_controls.has_value() != g0.ego_conditioned) {
    throw std::invalid_argument(g0.ego_conditioned
                                    ? "rollout: conditioned graph needs planned ego controls"
                                    : "rollout: ego controls given for an unconditioned graph");
  }
  if (config.ego_controls && config.ego_controls->size() != config.horizon) {
    throw std::invalid_argument("rollout: " + std::to_string(config.ego_controls->size()) +
                                " ego controls for a horizon of " +
                                std::to_string(config.horizon));
  }
  if (g0.nodes.empty()) throw std::invalid_argument("rollout: empty graph");
  const MotionPrimitiveSet prims(model.config.lattice);
  const std::size_t n = g0.nodes.size();
  const std::optional<std::size_t> ego = g0.ego_index();
  const std::size_t count = config.mode == RolloutMode::kMaxLikelihood ? 1 : config.samples;

  std::vector<Trajectory> out;
  for (std::size_t j = 0; j < count; ++j) {
    std::mt19937_64 rng(derive_seed(config.seed, j));
    TrafficGraph g = g0;
    Trajectory traj;
    for (const GraphNode& node : g.nodes) traj.agent_ids.push_back(node.agent.id);
    traj.waypoints.assign(n, {});
    std::vector<VehicleState> next(n);
    for (std::size_t h = 0; h < config.horizon; ++h) {
      const std::vector<Intention> q = gnn_forward(g, model.params, model.config);
      for (std::size_t i = 0; i < n; ++i) {
        const AgentState& a = g.nodes[i].agent;
        ControlInput u;
        if (g.ego_conditioned && ego && i == *ego) {
          u = (*config.ego_controls)[h];
        } else if (a.kind == AgentKind::kPedestrian) {
          u = prims.control(prims.zero_index());
        } else if (config.mode == RolloutMode::kMaxLikelihood) {
          u = prims.control(q[i].argmax());
        } else {
          u = prims.control(sample_index(q[i].probabilities(), uniform_unit(rng)));
        }
        next[i] = integrate_unicycle(a.state, u, prims.dt(), graph_config.integration);
        traj.waypoints[i].push_back({next[i].x, next[i].y});
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (g.ego_conditioned && ego && i == *ego) {
          if (h + 1 < config.horizon) {
            g.nodes[i].agent.intention =
                Intention::one_hot(prims.size(), prims.nearest((*config.ego_controls)[h + 1]));
          }
        } else {
          g.nodes[i].agent.intention = q[i];
        }
      }
      refresh_node_features(g, next, prims, map, graph_config);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Point2> integrate_controls(const VehicleState& start,
                                       const std::vector<ControlInput>& controls, double dt,
                                       const IntegrationOptions& options) {
  std::vector<Point2> pts;
  VehicleState s = start;
  for (const ControlInput& u : controls) {
    s = integrate_unicycle(s, u, dt, options);
    pts.push_back({s.x, s.y});
  }
  return pts;
}

Trajectory constant_velocity_predict(const TrafficGraph& g0, std::size_t horizon,
                                     const IntegrationOptions& options) {
  Trajectory t;
  const std::vector<ControlInput> zero(horizon);
  for (const GraphNode& node : g0.nodes) {
    t.agent_ids.push_back(node.agent.id);
    t.waypoints.push_back(integrate_controls(node.agent.state, zero, kSceneStepSeconds, options));
  }
  return t;
}

double ade(const Trajectory& pred, const Trajectory& truth) {
  return mean(per_agent_error(pred, truth, false));
}

double fde(const Trajectory& pred, const Trajectory& truth) {
  return mean(per_agent_error(pred, truth, true));
}

double min_k_ade(const std::vector<Trajectory>& preds, const Trajectory& truth, std::size_t k) {
  return min_k(preds, truth, k, false);
}

double min_k_fde(const std::vector<Trajectory>& preds, const Trajectory& truth, std::size_t k) {
  return min_k(preds, truth, k, true);
}

VelocityEstimate estimate_velocity(const std::vector<Point2>& past, double fallback_heading,
                                   double dt) {
  if (past.size() < 2) return {0.0, wrap_angle(fallback_heading), true};
  const std::size_t span = past.size() >= 3 ? 2 : 1;
  const Point2& a = past[past.size() - 1 - span];
  const Point2& b = past.back();
  const double d = std::hypot(b.x - a.x, b.y - a.y);
  VelocityEstimate e;
  e.v = d / (dt * static_cast<double>(span));
  e.theta = d > 0.0 ? std::atan2(b.y - a.y, b.x - a.x) : wrap_angle(fallback_heading);
  return e;
}

TrafficGraph warm_start(const ModelRef& model, const SceneSequence& scene, std::size_t t0,
                        std::size_t history, const RegionConfig& region,
                        const GraphConfig& graph_config) {
  if (t0 >= scene.steps.size()) {
    throw std::invalid_argument("warm_start: step " + std::to_string(t0) + " outside scene '" +
                                scene.id + "'");
  }
  const MotionPrimitiveSet prims(model.config.lattice);
  const auto ego = scene.ego_id();
  const SceneStep& now = scene.steps[t0];
  std::vector<AgentState> local = ego && now.find(*ego) != nullptr
                                      ? select_local_agents(now.agents, *ego, region)
                                      : now.agents;
  std::map<std::int64_t, Intention> q;
  for (const AgentState& a : local) q.emplace(a.id, Intention::uniform(prims.size()));

  for (std::size_t t = t0 - std::min(history, t0); t < t0; ++t) {
    std::vector<AgentState> agents;
    for (const AgentState& a : scene.steps[t].agents) {
      const auto it = q.find(a.id);
      if (it != q.end()) agents.push_back({a.id, a.kind, a.state, it->second});
    }
    if (agents.empty()) continue;
    const TrafficGraph g = build_graph(agents, prims, scene.map, graph_config);
    const auto updated = gnn_forward(g, model.params, model.config);
    for (std::size_t i = 0; i < agents.size(); ++i) q.at(agents[i].id) = updated[i];
  }
  for (AgentState& a : local) a.intention = q.at(a.id);
  return build_graph(local, prims, scene.map, graph_config);
}

std::vector<ControlInput> observed_ego_controls(const SceneSequence& scene, std::size_t t0,
                                                std::size_t horizon,
                                                const MotionPrimitiveSet& prims) {
  const auto ego = scene.ego_id();
  if (!ego) throw std::invalid_argument("scene '" + scene.id + "' has no ego");
  if (t0 + horizon >= scene.steps.size()) {
    throw std::invalid_argument("scene '" + scene.id + "' is too short for the horizon");
  }
  std::vector<ControlInput> u;
  for (std::size_t h = 0; h < horizon; ++h) {
    const AgentState* a = scene.steps[t0 + h].find(*ego);
    const AgentState* b = scene.steps[t0 + h + 1].find(*ego);
    if (a == nullptr || b == nullptr) {
      throw std::invalid_argument("scene '" + scene.id + "': ego missing at step " +
                                  std::to_string(t0 + h + (a == nullptr ? 0 : 1)));
    }
    u.push_back(prims.control(target_intention_onehot(a->state, b->state, prims).argmax()));
  }
  return u;
}

Trajectory truth_trajectory(const SceneSequence& scene, std::size_t t0, std::size_t horizon,
                            const std::vector<std::int64_t>& ids) {
  if (t0 + horizon >= scene.steps.size()) {
    throw std::invalid_argument("scene '" + scene.id + "' is too short for the horizon");
  }
  Trajectory t;
  for (const std::int64_t id : ids) {
    std::vector<Point2> pts;
    for (std::size_t h = 1; h <= horizon; ++h) {
      const AgentState* a = scene.steps[t0 + h].find(id);
      if (a == nullptr) break;
      pts.push_back({a->state.x, a->state.y});
    }
    if (pts.size() == horizon) {
      t.agent_ids.push_back(id);
      t.waypoints.push_back(std::move(pts));
    }
  }
  return t;
}

ScenePrediction predict_scene(const ModelRef& model, const SceneSequence& scene,
                              const EvalConfig& config) {
  const std::size_t t0 = config.history;
  const MotionPrimitiveSet prims(model.config.lattice);
  GraphConfig graph_config = config.graph;
  graph_config.raster = model.config.raster;

  ScenePrediction p;
  p.scene_id = scene.id;
  p.t0 = t0;
  p.start = warm_start(model, scene, t0, config.history, config.region, graph_config);
  std::vector<std::int64_t> candidates;
  for (const GraphNode& node : p.start.nodes) {
    if (node.agent.kind == AgentKind::kVehicle) candidates.push_back(node.agent.id);
  }
  std::vector<std::int64_t> scored = candidates;
  if (t0 + config.horizon < scene.steps.size()) {
    p.truth = truth_trajectory(scene, t0, config.horizon, candidates);
    scored = p.truth.agent_ids;
  }

  RolloutConfig rc;
  rc.horizon = config.horizon;
  rc.seed = config.seed;
  TrafficGraph g = p.start;
  if (config.conditional) {
    if (!scene.ego_id()) {
      throw std::invalid_argument("scene '" + scene.id + "' has no ego to condition on");
    }
    rc.ego_controls = config.ego_controls
                          ? *config.ego_controls
                          : observed_ego_controls(scene, t0, config.horizon, prims);
    if (rc.ego_controls->size() != config.horizon) {
      throw std::invalid_argument("conditional run needs " + std::to_string(config.horizon) +
                                  " ego controls, got " +
                                  std::to_string(rc.ego_controls->size()));
    }
    g = condition_on_ego(p.start, rc.ego_controls->front(), prims);
    p.start = g;
  }
  p.const_vel = constant_velocity_predict(g, config.horizon, graph_config.integration).select(scored);
  p.ml = rollout(model, g, scene.map, rc, graph_config).front().select(scored);
  if (config.samples > 0) {
    rc.mode = RolloutMode::kSampled;
    rc.samples = config.samples;
    for (const Trajectory& t : rollout(model, g, scene.map, rc, graph_config)) {
      p.samples.push_back(t.select(scored));
    }
  }
  return p;
}

std::vector<MetricRow> evaluate(const std::vector<ScenePrediction>& predictions, std::size_t k) {
  const std::string min_name = "rtgnn_min" + std::to_string(k);
  std::vector<MetricRow> rows;
  const auto add = [&](const std::string& method, const auto& pick_pred, bool final_only) {
    MetricRow row{method, final_only ? "fde" : "ade", {}};
    for (std::size_t c = 0; c < kEvalHorizonsSeconds.size(); ++c) {
      const auto steps =
          static_cast<std::size_t>(std::lround(kEvalHorizonsSeconds[c] / kSceneStepSeconds));
      double sum = 0.0;
      std::size_t scenes = 0;
      for (const ScenePrediction& p : predictions) {
        if (p.truth.agent_ids.empty() || steps > p.truth.horizon()) continue;
        const auto value = pick_pred(p, steps, final_only);
        if (!value) continue;
        sum += *value;
        ++scenes;
      }
      row.values[c] = scenes > 0 ? sum / static_cast<double>(scenes)
                                 : std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  };
  const auto single = [](const Trajectory ScenePrediction::*member) {
    return [member](const ScenePrediction& p, std::size_t steps,
                    bool final_only) -> std::optional<double> {
      const Trajectory& t = p.*member;
      if (t.agent_ids.empty()) return std::nullopt;
      const Trajectory pred = t.prefix(steps);
      const Trajectory truth = p.truth.prefix(steps);
      return final_only ? fde(pred, truth) : ade(pred, truth);
    };
  };
  const auto multi = [k](const ScenePrediction& p, std::size_t steps,
                         bool final_only) -> std::optional<double> {
    if (p.samples.size() < k) return std::nullopt;
    std::vector<Trajectory> preds;
    for (const Trajectory& t : p.samples) preds.push_back(t.prefix(steps));
    const Trajectory truth = p.truth.prefix(steps);
    return final_only ? min_k_fde(preds, truth, k) : min_k_ade(preds, truth, k);
  };
  const bool has_cv = std::any_of(predictions.begin(), predictions.end(),
                                  [](const auto& p) { return !p.const_vel.agent_ids.empty(); });
  const bool has_ml = std::any_of(predictions.begin(), predictions.end(),
                                  [](const auto& p) { return !p.ml.agent_ids.empty(); });
  const bool has_samples = std::any_of(predictions.begin(), predictions.end(),
                                       [k](const auto& p) { return p.samples.size() >= k; });
  for (const bool final_only : {false, true}) {
    if (has_cv) add("const_vel", single(&ScenePrediction::const_vel), final_only);
    if (has_ml) add("rtgnn_ml", single(&ScenePrediction::ml), final_only);
    if (has_samples) add(min_name, multi, final_only);
  }
  return rows;
}

std::string format_table(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "method" << std::setw(8) << "metric";
  for (const double s : kEvalHorizonsSeconds) {
    out << std::right << std::setw(9) << (std::to_string(static_cast<int>(s)) + "s");
  }
  out << '\n';
  for (const MetricRow& r : rows) {
    out << std::left << std::setw(14) << r.method << std::setw(8) << r.metric << std::right
        << std::fixed << std::setprecision(3);
    for (const double v : r.values) out << std::setw(9) << v;
    out << '\n';
  }
  return out.str();
}

void write_table_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "method,metric";
  for (const double s : kEvalHorizonsSeconds) out << ',' << static_cast<int>(s) << 's';
  out << '\n' << std::setprecision(17);
  for (const MetricRow& r : rows) {
    out << r.method << ',' << r.metric;
    for (const double v : r.values) out << ',' << v;
    out << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<ScenePrediction>& predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "scene_id,agent_id,sample,step,x,y\n" << std::setprecision(17);
  const auto emit = [&](const ScenePrediction& p, const std::string& label, const Trajectory& t) {
    for (std::size_t k = 0; k < t.agent_ids.size(); ++k) {
      for (std::size_t h = 0; h < t.waypoints[k].size(); ++h) {
        out << p.scene_id << ',' << t.agent_ids[k] << ',' << label << ',' << p.t0 + h + 1 << ','
            << t.waypoints[k][h].x << ',' << t.waypoints[k][h].y << '\n';
      }
    }
  };
  for (const ScenePrediction& p : predictions) {
    emit(p, "truth", p.truth);
    emit(p, "cv", p.const_vel);
    emit(p, "ml", p.ml);
    for (std::size_t j = 0; j < p.samples.size(); ++j) emit(p, std::to_string(j), p.samples[j]);
  }
}

std::vector<ScenePrediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("scene_id,agent_id,sample,step,x,y", 0) != 0) {
    throw std::runtime_error(path.string() + ": expected header 'scene_id,agent_id,sample,step,x,y'");
  }
  // scene -> label -> agent -> step -> point, each in first-seen order.
  struct Series {
    std::vector<std::int64_t> order;
    std::map<std::int64_t, std::map<std::size_t, Point2>> points;
  };
  std::vector<std::string> scene_order;
  std::map<std::string, std::map<std::string, Series>> data;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) f.push_back(cell);
    if (f.size() != 6) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected 6 fields");
    }
    try {
      const std::int64_t id = std::stoll(f[1]);
      const std::size_t step = std::stoul(f[3]);
      if (!data.contains(f[0])) scene_order.push_back(f[0]);
      Series& s = data[f[0]][f[2]];
      if (!s.points.contains(id)) s.order.push_back(id);
      s.points[id][step] = {std::stod(f[4]), std::stod(f[5])};
    } catch (const std::logic_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": bad row '" + line +
                               "'");
    }
  }
  std::vector<ScenePrediction> out;
  for (const std::string& scene : scene_order) {
    ScenePrediction p;
    p.scene_id = scene;
    std::size_t first = std::numeric_limits<std::size_t>::max();
    for (const auto& [label, s] : data[scene]) {
      for (const auto& [id, pts] : s.points) first = std::min(first, pts.begin()->first);
    }
    p.t0 = first - 1;
    const auto build = [&](const Series& s) {
      Trajectory t;
      for (const std::int64_t id : s.order) {
        std::vector<Point2> pts;
        std::size_t expect = first;
        for (const auto& [step, pt] : s.points.at(id)) {
          if (step != expect++) {
            throw std::runtime_error(path.string() + ": scene " + scene + " agent " +
                                     std::to_string(id) + " has a gap in its steps");
          }
          pts.push_back(pt);
        }
        t.agent_ids.push_back(id);
        t.waypoints.push_back(std::move(pts));
      }
      return t;
    };
    std::map<std::size_t, Trajectory> samples;
    for (const auto& [label, s] : data[scene]) {
      if (label == "truth") {
        p.truth = build(s);
      } else if (label == "cv") {
        p.const_vel = build(s);
      } else if (label == "ml") {
        p.ml = build(s);
      } else {
        try {
          samples.emplace(std::stoul(label), build(s));
        } catch (const std::logic_error&) {
          throw std::runtime_error(path.string() + ": unknown sample label '" + label + "'");
        }
      }
    }
    for (auto& [j, t] : samples) p.samples.push_back(std::move(t));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rtgnn
