#pragma once

// Message-passing network over a TrafficGraph.
//
// Shape chain with the default configuration (valid convolutions, stride 1):
//
//   CNN_w  [6,21,21] -conv5x16-> [16,17,17] -pool2-> [16,8,8]
//                    -conv5x32-> [32,4,4]   -global max-> 32
//   CNN_m  [3,100,100] -conv5x4-> [4,96,96] -pool2-> [4,48,48]
//                      -conv5x8-> [8,44,44] -pool2-> [8,22,22]
//                      -conv3x16-> [16,20,20] -max over rear/front halves-> 16x2 = 32
//   MLP_m  (v_a, c_a, x_b in a's frame, c_b) 1+32+5+32 = 70 -> 64 -> 32 -> 16
//   MLP_q  (v_a, c_a, p_a, m_a)              1+32+32+16 = 81 -> 64 -> 128 -> 441
//
// CNN_w uses leaky_relu, CNN_m uses relu. Hidden MLP layers use leaky_relu and
// the MLP outputs are linear; the intention is softmax(MLP_q).

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rtgnn/autodiff.hpp"
#include "rtgnn/dynamics.hpp"
#include "rtgnn/parameters.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {

struct ConvSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
};

// Channels of a primitive image: (x, y, cos theta, sin theta, v) of the
// frame-localised future states, then the intention.
inline constexpr std::size_t kStateChannels = 5;
inline constexpr std::size_t kPrimitiveImageChannels = kStateChannels + 1;
// (x, y, cos theta, sin theta, v) of a neighbour in the receiver's frame.
inline constexpr std::size_t kRelativeStateWidth = 5;

struct GnnConfig {
  PrimitiveConfig lattice;
  RasterConfig raster;
  std::size_t iterations = 2;  // K
  // A 2x2/stride-2 max pool follows every conv except the last. The last conv
  // of CNN_w is max-pooled over its whole extent; the last conv of CNN_m is
  // max-pooled over `map_split` equal slices along the heading axis.
  std::vector<ConvSpec> cnn_w = {{16, 5}, {32, 5}};
  std::vector<ConvSpec> cnn_m = {{4, 5}, {8, 5}, {16, 3}};
  std::size_t map_channels = kRasterChannels;
  std::size_t map_split = 2;
  std::vector<std::size_t> mlp_m_hidden = {64, 32};
  std::size_t message_width = 16;
  std::vector<std::size_t> mlp_q_hidden = {64, 128};
  double slope = 0.01;
  // Features are divided by these before entering the network.
  double position_scale = 10.0;
  double speed_scale = 10.0;

  // Throws std::invalid_argument if K < 1 or a layer stack does not fit its
  // input size.
  void validate() const;

  std::size_t primitive_count() const { return lattice.accel_count * lattice.omega_count; }
  std::size_t intention_encoding_width() const;  // |c|
  std::size_t map_encoding_width() const;        // |p|
  std::size_t message_input_width() const;       // MLP_m input
  std::size_t update_input_width() const;        // MLP_q input

  // Stable text form; its FNV-1a hash is the model digest stored in checkpoints.
  std::string describe() const;
  std::uint64_t digest() const;
};

// The reference total quoted for the published architecture. The computed
// default total is 1032 higher: MLP_q takes all four of its inputs (81 wide,
// +13*64) and CNN_m reads 3 raster channels instead of 1 (+2*4*25).
inline constexpr std::size_t kReferenceParameterCount = 94105;

struct TensorSpec {
  std::string name;
  Shape shape;
};

// Every parameter tensor the configuration requires, in storage order.
std::vector<TensorSpec> parameter_layout(const GnnConfig& config);
std::size_t parameter_count(const GnnConfig& config);
std::size_t parameter_count(const ParameterStore& params);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ParameterStore init_parameters(const GnnConfig& config, std::uint64_t seed);

// Throws std::invalid_argument naming the first missing or mis-shaped tensor.
void check_parameters(const ParameterStore& params, const GnnConfig& config);

// Constant (intention-independent) inputs of one forward pass.
struct GraphFeatures {
  std::size_t nodes = 0;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  Tensor node_images;   // [N,5,A,W] own future states in own frame
  Tensor edge_images;   // [E,5,A,W] source future states in receiver frame
  Tensor self_speed;    // [N,1]
  Tensor edge_relative; // [E,5] source state in receiver frame
  Tensor rasters;       // [N,C,R,R]
  std::vector<bool> pinned;  // intention passes through unchanged
};

GraphFeatures extract_features(const TrafficGraph& g, const GnnConfig& config);

// Intentions of all nodes as an [N,M] tensor.
Tensor intention_matrix(const TrafficGraph& g);

// Parameters placed on a tape.
using ParameterVars = std::map<std::string, ad::Var>;
ParameterVars bind_parameters(ad::Tape& tape, const ParameterStore& params);

struct ForwardVars {
  ad::Var logits;      // [N,M] pre-softmax output of the last iteration
  ad::Var intentions;  // [N,M] pinned rows copied from the input
};

// K synchronous message-passing iterations starting from q [N,M].
ForwardVars gnn_forward(ad::Tape& tape, const ParameterVars& params, const GnnConfig& config,
                        const GraphFeatures& features, ad::Var q);

// Gradient-free convenience wrapper; outputs are index-aligned with g.nodes.
std::vector<Intention> gnn_forward(const TrafficGraph& g, const ParameterStore& params,
                                   const GnnConfig& config);

// Single-component entry points, used for inspection and tests.
Tensor primitive_image(const FutureStates& w, const Intention& q, const Pose2& frame,
                       const GnnConfig& config);  // [6,A,W]
std::vector<double> encode_primitive_image(const FutureStates& w, const Intention& q,
                                           const Pose2& frame, const ParameterStore& params,
                                           const GnnConfig& config);
std::vector<double> encode_map(const MapRaster& raster, const ParameterStore& params,
                               const GnnConfig& config);
// Message from node `src` to node `dst` of g.
std::vector<double> compute_message(const TrafficGraph& g, std::size_t src, std::size_t dst,
                                    const ParameterStore& params, const GnnConfig& config);
// Elementwise maximum; an empty set gives zeros of the given width.
std::vector<double> aggregate_messages(const std::vector<std::vector<double>>& messages,
                                       std::size_t width);

}  // namespace rtgnn
