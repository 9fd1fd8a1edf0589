#include "rtgnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rtgnn/serialize.hpp"

namespace rtgnn {
namespace {

std::string conv_param(const std::string& net, std::size_t layer, const char* part) {
  return net + ".conv" + std::to_string(layer) + "." + part;
}

std::string fc_param(const std::string& net, std::size_t layer, const char* part) {
  return net + ".fc" + std::to_string(layer) + "." + part;
}

// Spatial size after a conv stack; throws when a layer does not fit.
std::pair<std::size_t, std::size_t> conv_chain(const std::string& net,
                                               const std::vector<ConvSpec>& layers,
                                               std::size_t h, std::size_t w) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ConvSpec& l = layers[i];
    if (l.filters == 0 || l.kernel == 0) {
      throw std::invalid_argument(net + " layer " + std::to_string(i) +
                                  " needs non-zero filters and kernel");
    }
    if (l.kernel > h || l.kernel > w) {
      throw std::invalid_argument(net + " layer " + std::to_string(i) + ": kernel " +
                                  std::to_string(l.kernel) + " exceeds input " +
                                  std::to_string(h) + "x" + std::to_string(w));
    }
    h = h - l.kernel + 1;
    w = w - l.kernel + 1;
    if (i + 1 < layers.size()) {
      if (h < 2 || w < 2) {
        throw std::invalid_argument(net + " layer " + std::to_string(i) + ": output " +
                                    std::to_string(h) + "x" + std::to_string(w) +
                                    " too small to pool");
      }
      h /= 2;
      w /= 2;
    }
  }
  return {h, w};
}

ad::Var run_cnn(ad::Tape& tape, const ParameterVars& params, const std::string& net,
                const std::vector<ConvSpec>& layers, ad::Var x, bool leaky, double slope,
                std::size_t split) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ad::conv2d(tape, x, params.at(conv_param(net, i, "weight")),
                   params.at(conv_param(net, i, "bias")));
    x = leaky ? ad::leaky_relu(tape, x, slope) : ad::relu(tape, x);
    if (i + 1 < layers.size()) x = ad::max_pool2d(tape, x, ad::PoolWindow{});
  }
  const Shape& s = tape.value(x).shape();
  const std::size_t slice = s[3] / split;
  x = ad::max_pool2d(tape, x, ad::PoolWindow{s[2], slice, s[2], slice});
  return ad::reshape(tape, x, Shape{s[0], s[1] * split});
}

ad::Var run_mlp(ad::Tape& tape, const ParameterVars& params, const std::string& net,
                std::size_t layers, ad::Var x, double slope) {
  for (std::size_t i = 0; i < layers; ++i) {
    x = ad::linear(tape, x, params.at(fc_param(net, i, "weight")),
                   params.at(fc_param(net, i, "bias")));
    if (i + 1 < layers) x = ad::leaky_relu(tape, x, slope);
  }
  return x;
}

void write_state_channels(const FutureStates& local, const GnnConfig& config, double* dst) {
  const std::size_t cells = local.states.size();
  for (std::size_t i = 0; i < cells; ++i) {
    const VehicleState& s = local.states[i];
    dst[i] = s.x / config.position_scale;
    dst[cells + i] = s.y / config.position_scale;
    dst[2 * cells + i] = std::cos(s.theta);
    dst[3 * cells + i] = std::sin(s.theta);
    dst[4 * cells + i] = s.v / config.speed_scale;
  }
}

void write_relative_state(const VehicleState& s, const GnnConfig& config, double* dst) {
  dst[0] = s.x / config.position_scale;
  dst[1] = s.y / config.position_scale;
  dst[2] = std::cos(s.theta);
  dst[3] = std::sin(s.theta);
  dst[4] = s.v / config.speed_scale;
}

void check_future_grid(const FutureStates& w, const GnnConfig& config) {
  if (w.accel_count != config.lattice.accel_count || w.omega_count != config.lattice.omega_count ||
      w.states.size() != config.primitive_count()) {
    throw std::invalid_argument("future-state grid " + std::to_string(w.accel_count) + "x" +
                                std::to_string(w.omega_count) + " does not match the lattice");
  }
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

void GnnConfig::validate() const {
  (void)MotionPrimitiveSet(lattice);
  if (iterations < 1) throw std::invalid_argument("GnnConfig: iterations must be >= 1");
  if (cnn_w.empty() || cnn_m.empty()) {
    throw std::invalid_argument("GnnConfig: both CNN stacks need at least one layer");
  }
  if (map_channels == 0 || map_split == 0 || message_width == 0) {
    throw std::invalid_argument("GnnConfig: map_channels, map_split and message_width must be > 0");
  }
  if (!(position_scale > 0.0) || !(speed_scale > 0.0)) {
    throw std::invalid_argument("GnnConfig: feature scales must be positive");
  }
  conv_chain("cnn_w", cnn_w, lattice.accel_count, lattice.omega_count);
  const auto [h, w] = conv_chain("cnn_m", cnn_m, raster.cells, raster.cells);
  if (w % map_split != 0) {
    throw std::invalid_argument("cnn_m: final width " + std::to_string(w) +
                                " is not divisible by map_split " + std::to_string(map_split));
  }
  (void)h;
  for (const std::size_t width : mlp_m_hidden) {
    if (width == 0) throw std::invalid_argument("mlp_m: hidden width must be > 0");
  }
  for (const std::size_t width : mlp_q_hidden) {
    if (width == 0) throw std::invalid_argument("mlp_q: hidden width must be > 0");
  }
}

std::size_t GnnConfig::intention_encoding_width() const { return cnn_w.back().filters; }

std::size_t GnnConfig::map_encoding_width() const { return cnn_m.back().filters * map_split; }

std::size_t GnnConfig::message_input_width() const {
  return 1 + 2 * intention_encoding_width() + kRelativeStateWidth;
}

std::size_t GnnConfig::update_input_width() const {
  return 1 + intention_encoding_width() + map_encoding_width() + message_width;
}

std::string GnnConfig::describe() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "lattice " << lattice.accel_count << ' ' << lattice.accel_min << ' ' << lattice.accel_max
      << ' ' << lattice.omega_count << ' ' << lattice.omega_min << ' ' << lattice.omega_max << ' '
      << lattice.dt << ";raster " << raster.cells << ' ' << raster.resolution << ' '
      << raster.lane_half_width << ";K " << iterations << ";cnn_w";
  for (const auto& l : cnn_w) out << ' ' << l.filters << 'x' << l.kernel;
  out << ";cnn_m " << map_channels;
  for (const auto& l : cnn_m) out << ' ' << l.filters << 'x' << l.kernel;
  out << " split " << map_split << ";mlp_m";
  for (const auto w : mlp_m_hidden) out << ' ' << w;
  out << ' ' << message_width << ";mlp_q";
  for (const auto w : mlp_q_hidden) out << ' ' << w;
  out << ";slope " << slope << ";scale " << position_scale << ' ' << speed_scale;
  return out.str();
}

std::uint64_t GnnConfig::digest() const { return fnv1a64(describe()); }

std::vector<TensorSpec> parameter_layout(const GnnConfig& config) {
  config.validate();
  std::vector<TensorSpec> specs;
  const auto add_convs = [&](const std::string& net, const std::vector<ConvSpec>& layers,
                             std::size_t in) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const ConvSpec& l = layers[i];
      specs.push_back({conv_param(net, i, "weight"), {l.filters, in, l.kernel, l.kernel}});
      specs.push_back({conv_param(net, i, "bias"), {l.filters}});
      in = l.filters;
    }
  };
  const auto add_mlp = [&](const std::string& net, std::vector<std::size_t> widths,
                           std::size_t in, std::size_t out) {
    widths.push_back(out);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      specs.push_back({fc_param(net, i, "weight"), {widths[i], in}});
      specs.push_back({fc_param(net, i, "bias"), {widths[i]}});
      in = widths[i];
    }
  };
  add_convs("cnn_w", config.cnn_w, kPrimitiveImageChannels);
  add_convs("cnn_m", config.cnn_m, config.map_channels);
  add_mlp("mlp_m", config.mlp_m_hidden, config.message_input_width(), config.message_width);
  add_mlp("mlp_q", config.mlp_q_hidden, config.update_input_width(), config.primitive_count());
  return specs;
}

std::size_t parameter_count(const GnnConfig& config) {
  std::size_t n = 0;
  for (const auto& spec : parameter_layout(config)) n += shape_size(spec.shape);
  return n;
}

std::size_t parameter_count(const ParameterStore& params) { return params.scalar_count(); }

ParameterStore init_parameters(const GnnConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterStore store;
  double bound = 1.0;
  for (const auto& spec : parameter_layout(config)) {
    if (spec.shape.size() > 1) {
      const std::size_t fan_in = shape_size(spec.shape) / spec.shape[0];
      bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(spec.shape);
    for (double& v : t.values()) v = dist(rng);
    store.add(spec.name, std::move(t));
  }
  return store;
}

void check_parameters(const ParameterStore& params, const GnnConfig& config) {
  const auto layout = parameter_layout(config);
  for (const auto& spec : layout) {
    if (!params.contains(spec.name)) {
      throw std::invalid_argument("parameter '" + spec.name + "' is missing");
    }
    const Tensor& t = params.at(spec.name);
    if (t.shape() != spec.shape) {
      throw std::invalid_argument("parameter '" + spec.name + "' has shape " +
                                  shape_string(t.shape()) + ", config expects " +
                                  shape_string(spec.shape));
    }
  }
  if (params.tensor_count() != layout.size()) {
    throw std::invalid_argument("parameter store has " + std::to_string(params.tensor_count()) +
                                " tensors, config expects " + std::to_string(layout.size()));
  }
}

GraphFeatures extract_features(const TrafficGraph& g, const GnnConfig& config) {
  const std::size_t n = g.nodes.size();
  const std::size_t e = g.edges.size();
  const std::size_t a = config.lattice.accel_count;
  const std::size_t w = config.lattice.omega_count;
  const std::size_t plane = kStateChannels * a * w;
  const std::size_t cells = config.raster.cells;
  const std::size_t raster_size = config.map_channels * cells * cells;

  GraphFeatures f;
  f.nodes = n;
  f.node_images = Tensor({n, kStateChannels, a, w});
  f.edge_images = Tensor({e, kStateChannels, a, w});
  f.self_speed = Tensor({n, 1});
  f.edge_relative = Tensor({e, kRelativeStateWidth});
  f.rasters = Tensor({n, config.map_channels, cells, cells});
  f.pinned.resize(n);

  std::vector<Pose2> frames(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GraphNode& node = g.nodes[i];
    check_future_grid(node.future, config);
    if (node.raster.cells != cells || node.raster.data.size() != raster_size) {
      throw std::invalid_argument("node " + std::to_string(i) + " raster does not match config");
    }
    frames[i] = Pose2::frame_of(node.agent.state);
    write_state_channels(to_frame(frames[i], node.future), config,
                         f.node_images.data() + i * plane);
    f.self_speed[i] = node.agent.state.v / config.speed_scale;
    std::copy(node.raster.data.begin(), node.raster.data.end(),
              f.rasters.data() + i * raster_size);
    const AgentKind kind = node.agent.kind;
    f.pinned[i] = kind == AgentKind::kPedestrian || (kind == AgentKind::kEgo && g.ego_conditioned);
  }
  f.edge_src.reserve(e);
  f.edge_dst.reserve(e);
  for (std::size_t k = 0; k < e; ++k) {
    const GraphEdge& edge = g.edges[k];
    if (edge.src >= n || edge.dst >= n || edge.src == edge.dst) {
      throw std::invalid_argument("edge " + std::to_string(k) + " is not a valid node pair");
    }
    f.edge_src.push_back(edge.src);
    f.edge_dst.push_back(edge.dst);
    const Pose2& frame = frames[edge.dst];
    const GraphNode& src = g.nodes[edge.src];
    write_state_channels(to_frame(frame, src.future), config, f.edge_images.data() + k * plane);
    write_relative_state(to_frame(frame, src.agent.state), config,
                         f.edge_relative.data() + k * kRelativeStateWidth);
  }
  return f;
}

Tensor intention_matrix(const TrafficGraph& g) {
  if (g.nodes.empty()) throw std::invalid_argument("intention_matrix: empty graph");
  const std::size_t m = g.nodes.front().agent.intention.size();
  Tensor q({g.nodes.size(), m});
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& p = g.nodes[i].agent.intention.probabilities();
    if (p.size() != m) throw std::invalid_argument("intention sizes differ across nodes");
    std::copy(p.begin(), p.end(), q.data() + i * m);
  }
  return q;
}

ParameterVars bind_parameters(ad::Tape& tape, const ParameterStore& params) {
  ParameterVars vars;
  for (const auto& [name, t] : params.entries()) vars.emplace(name, tape.parameter(t));
  return vars;
}

ForwardVars gnn_forward(ad::Tape& tape, const ParameterVars& params, const GnnConfig& config,
                        const GraphFeatures& f, ad::Var q) {
  const std::size_t n = f.nodes;
  const std::size_t e = f.edge_src.size();
  const std::size_t m = config.primitive_count();
  const Shape& qs = tape.value(q).shape();
  if (qs != Shape{n, m}) {
    throw ShapeError("gnn_forward: intentions " + shape_string(qs) + ", expected " +
                     shape_string({n, m}));
  }
  const std::size_t a = config.lattice.accel_count;
  const std::size_t w = config.lattice.omega_count;
  const std::size_t mlp_m_layers = config.mlp_m_hidden.size() + 1;
  const std::size_t mlp_q_layers = config.mlp_q_hidden.size() + 1;
  const bool any_pinned = std::find(f.pinned.begin(), f.pinned.end(), true) != f.pinned.end();

  const ad::Var node_const = tape.constant(f.node_images);
  const ad::Var speed = tape.constant(f.self_speed);
  const ad::Var p = run_cnn(tape, params, "cnn_m", config.cnn_m, tape.constant(f.rasters),
                            false, config.slope, config.map_split);

  ad::Var edge_const, rel, dst_speed;
  std::vector<std::size_t> node_rows(n), edge_rows(e);
  std::iota(node_rows.begin(), node_rows.end(), 0);
  std::iota(edge_rows.begin(), edge_rows.end(), n);
  if (e > 0) {
    edge_const = tape.constant(f.edge_images);
    rel = tape.constant(f.edge_relative);
    dst_speed = ad::gather_rows(tape, speed, f.edge_dst);
  }

  ForwardVars out{ad::Var{}, q};
  for (std::size_t k = 0; k < config.iterations; ++k) {
    const ad::Var q_img = ad::reshape(tape, out.intentions, Shape{n, 1, a, w});
    const ad::Var node_parts[] = {node_const, q_img};
    ad::Var images = ad::concat(tape, node_parts, 1);
    if (e > 0) {
      const ad::Var edge_parts[] = {edge_const, ad::gather_rows(tape, q_img, f.edge_src)};
      const ad::Var stacked[] = {images, ad::concat(tape, edge_parts, 1)};
      images = ad::concat(tape, stacked, 0);
    }
    const ad::Var codes =
        run_cnn(tape, params, "cnn_w", config.cnn_w, images, true, config.slope, 1);

    ad::Var c_nodes = codes;
    ad::Var agg;
    if (e > 0) {
      c_nodes = ad::gather_rows(tape, codes, node_rows);
      const ad::Var msg_parts[] = {dst_speed, ad::gather_rows(tape, c_nodes, f.edge_dst), rel,
                                   ad::gather_rows(tape, codes, edge_rows)};
      const ad::Var messages = run_mlp(tape, params, "mlp_m", mlp_m_layers,
                                       ad::concat(tape, msg_parts, 1), config.slope);
      agg = ad::segment_max(tape, messages, f.edge_dst, n);
    } else {
      agg = tape.constant(Tensor({n, config.message_width}, 0.0));
    }
    const ad::Var update_parts[] = {speed, c_nodes, p, agg};
    out.logits = run_mlp(tape, params, "mlp_q", mlp_q_layers,
                         ad::concat(tape, update_parts, 1), config.slope);
    const ad::Var updated = ad::softmax(tape, out.logits);
    out.intentions =
        any_pinned ? ad::select_rows(tape, f.pinned, out.intentions, updated) : updated;
  }
  return out;
}

std::vector<Intention> gnn_forward(const TrafficGraph& g, const ParameterStore& params,
                                   const GnnConfig& config) {
  check_parameters(params, config);
  ad::Tape tape(false);
  const auto vars = bind_parameters(tape, params);
  const GraphFeatures f = extract_features(g, config);
  const ad::Var q = tape.constant(intention_matrix(g));
  const ForwardVars out = gnn_forward(tape, vars, config, f, q);
  const Tensor& qt = tape.value(out.intentions);
  const std::size_t m = config.primitive_count();
  std::vector<Intention> result;
  result.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (f.pinned[i]) {
      result.push_back(g.nodes[i].agent.intention);
    } else {
      result.emplace_back(std::vector<double>(qt.data() + i * m, qt.data() + (i + 1) * m));
    }
  }
  return result;
}

Tensor primitive_image(const FutureStates& w, const Intention& q, const Pose2& frame,
                       const GnnConfig& config) {
  check_future_grid(w, config);
  if (q.size() != config.primitive_count()) {
    throw std::invalid_argument("primitive_image: intention size does not match the lattice");
  }
  const std::size_t cells = config.primitive_count();
  Tensor image({kPrimitiveImageChannels, config.lattice.accel_count, config.lattice.omega_count});
  write_state_channels(to_frame(frame, w), config, image.data());
  std::copy(q.probabilities().begin(), q.probabilities().end(),
            image.data() + kStateChannels * cells);
  return image;
}

std::vector<double> encode_primitive_image(const FutureStates& w, const Intention& q,
                                           const Pose2& frame, const ParameterStore& params,
                                           const GnnConfig& config) {
  ad::Tape tape(false);
  const auto vars = bind_parameters(tape, params);
  Tensor image = primitive_image(w, q, frame, config);
  Shape batched = image.shape();
  batched.insert(batched.begin(), 1);
  const ad::Var c = run_cnn(tape, vars, "cnn_w", config.cnn_w,
                            tape.constant(image.reshaped(batched)), true, config.slope, 1);
  return to_vector(tape.value(c));
}

std::vector<double> encode_map(const MapRaster& raster, const ParameterStore& params,
                               const GnnConfig& config) {
  ad::Tape tape(false);
  const auto vars = bind_parameters(tape, params);
  const Tensor r({1, config.map_channels, raster.cells, raster.cells}, raster.data);
  const ad::Var p = run_cnn(tape, vars, "cnn_m", config.cnn_m, tape.constant(r), false,
                            config.slope, config.map_split);
  return to_vector(tape.value(p));
}

std::vector<double> compute_message(const TrafficGraph& g, std::size_t src, std::size_t dst,
                                    const ParameterStore& params, const GnnConfig& config) {
  const GraphNode& a = g.nodes.at(dst);
  const GraphNode& b = g.nodes.at(src);
  const Pose2 frame = Pose2::frame_of(a.agent.state);
  const auto c_a = encode_primitive_image(a.future, a.agent.intention, frame, params, config);
  const auto c_b = encode_primitive_image(b.future, b.agent.intention, frame, params, config);
  std::vector<double> input;
  input.reserve(config.message_input_width());
  input.push_back(a.agent.state.v / config.speed_scale);
  input.insert(input.end(), c_a.begin(), c_a.end());
  double rel[kRelativeStateWidth];
  write_relative_state(to_frame(frame, b.agent.state), config, rel);
  input.insert(input.end(), rel, rel + kRelativeStateWidth);
  input.insert(input.end(), c_b.begin(), c_b.end());

  ad::Tape tape(false);
  const auto vars = bind_parameters(tape, params);
  const std::size_t width = input.size();
  const ad::Var x = tape.constant(Tensor({1, width}, std::move(input)));
  const ad::Var msg = run_mlp(tape, vars, "mlp_m", config.mlp_m_hidden.size() + 1, x, config.slope);
  return to_vector(tape.value(msg));
}

std::vector<double> aggregate_messages(const std::vector<std::vector<double>>& messages,
                                       std::size_t width) {
  if (messages.empty()) return std::vector<double>(width, 0.0);
  std::vector<double> out = messages.front();
  for (const auto& msg : messages) {
    if (msg.size() != width) throw std::invalid_argument("aggregate_messages: width mismatch");
    for (std::size_t i = 0; i < width; ++i) out[i] = std::max(out[i], msg[i]);
  }
  return out;
}

}  // namespace rtgnn
