#pragma once

// Reverse-mode differentiation over a linear tape of primitive operations.
//
// A Tape owns every intermediate value produced while it is active. Handles
// (Var) are indices into the tape, so a Tape and its Vars must not be mixed
// with another Tape. Tapes are single-owner and not thread-safe; independent
// tapes can run on different threads.
//
// Max-type reductions (max_pool2d, segment_max, max_reduce) route the adjoint
// to the lowest-index maximal element: row-major order inside a pooling
// window, input order for segment reductions.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rtgnn/tensor.hpp"

namespace rtgnn::ad {

struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

class Tape {
 public:
  // Called during backward with the gradient of the recorded output.
  using Adjoint = std::function<void(Tape& tape, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf that receives a gradient in backward() when gradients are enabled.
  Var parameter(Tensor value);

  // Appends an operation result. The output requires a gradient iff any
  // input does; the adjoint is dropped otherwise.
  Var record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint);
  Var record(Tensor value, std::span<const Var> inputs, Adjoint adjoint);

  const Tensor& value(Var v) const { return entries_.at(v.id).value; }
  bool requires_grad(Var v) const { return entries_.at(v.id).requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays adjoints in reverse order.
  // Throws ShapeError if loss is not a one-element tensor.
  void backward(Var loss);

  // Gradient accumulated for v, or nullptr if none reached it.
  const Tensor* grad(Var v) const;
  // Zero-initialised gradient buffer for v (allocated on first use).
  Tensor& grad_buffer(Var v);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Adjoint adjoint;
  };
  std::deque<Entry> entries_;
  bool grad_enabled_;
};

// ---- layers ---------------------------------------------------------------

struct PoolWindow {
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
};

// x [B,C,H,W], weight [F,C,kh,kw], bias [F] -> [B,F,H-kh+1,W-kw+1]. Stride 1,
// no padding.
Var conv2d(Tape& tape, Var x, Var weight, Var bias);
// x [B,C,H,W] -> [B,C,(H-h)/sh+1,(W-w)/sw+1] (floor).
Var max_pool2d(Tape& tape, Var x, const PoolWindow& window);
Var relu(Tape& tape, Var x);
// Gradient convention at x == 0 is slope 1.
Var leaky_relu(Tape& tape, Var x, double slope);
// x [B,in], weight [out,in], bias [out] -> [B,out].
Var linear(Tape& tape, Var x, Var weight, Var bias);
// Concatenation along `axis`; all other dimensions must agree.
Var concat(Tape& tape, std::span<const Var> parts, std::size_t axis);
// Softmax over the last axis.
Var softmax(Tape& tape, Var x);
Var log_softmax(Tape& tape, Var x);
// Elementwise maximum over the rows of x [n,D] -> [D]. n must be >= 1.
Var max_reduce(Tape& tape, Var x);
// Row-wise maximum per segment: x [E,D] -> [num_segments,D]. Segments that
// receive no row produce zeros.
Var segment_max(Tape& tape, Var x, std::span<const std::size_t> segment,
                std::size_t num_segments);

// ---- structural and arithmetic helpers -------------------------------------

// Treats x as [R, ...] and picks rows; indices may repeat.
Var gather_rows(Tape& tape, Var x, std::span<const std::size_t> rows);
Var reshape(Tape& tape, Var x, Shape shape);
// Row r of the result is a[r] when take_a[r], else b[r]. a and b share shape.
Var select_rows(Tape& tape, const std::vector<bool>& take_a, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var sum(Tape& tape, Var x);
// sum over `rows` of  -sum_i target[r,i] * log_softmax(logits)[r,i].
// logits and target are [N,M].
Var softmax_cross_entropy(Tape& tape, Var logits, const Tensor& target,
                          std::span<const std::size_t> rows);

// Generic entry point naming the layer kind; used by tools and tests that
// build layers from a description.
enum class LayerKind {
  kConv2d,
  kMaxPool2d,
  kRelu,
  kLeakyRelu,
  kLinear,
  kConcat,
  kSoftmax,
  kElementwiseMaxReduce,
};

struct LayerOptions {
  PoolWindow pool;
  double slope = 0.01;
  std::size_t axis = 0;
};

std::string layer_name(LayerKind kind);
Var layer_forward(Tape& tape, LayerKind kind, std::span<const Var> inputs,
                  std::span<const Var> weights, const LayerOptions& options = {});

}  // namespace rtgnn::ad
