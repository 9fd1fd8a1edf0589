#include "rtgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rtgnn/simd/kernels.hpp"

namespace rtgnn::ad {

// ---- tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  entries_.push_back(Entry{std::move(value), Tensor{}, false, false, {}});
  return Var{static_cast<std::uint32_t>(entries_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  entries_.push_back(Entry{std::move(value), Tensor{}, false, grad_enabled_, {}});
  return Var{static_cast<std::uint32_t>(entries_.size() - 1)};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(adjoint));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Adjoint adjoint) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var v : inputs) needs = needs || entries_.at(v.id).requires_grad;
  }
  entries_.push_back(Entry{std::move(value), Tensor{}, false, needs,
                           needs ? std::move(adjoint) : Adjoint{}});
  return Var{static_cast<std::uint32_t>(entries_.size() - 1)};
}

const Tensor* Tape::grad(Var v) const {
  const Entry& e = entries_.at(v.id);
  return e.has_grad ? &e.grad : nullptr;
}

Tensor& Tape::grad_buffer(Var v) {
  Entry& e = entries_.at(v.id);
  if (!e.has_grad) {
    e.grad = Tensor(e.value.shape(), 0.0);
    e.has_grad = true;
  }
  return e.grad;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(value(loss).shape()));
  }
  if (!requires_grad(loss)) return;
  grad_buffer(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (!e.has_grad || !e.adjoint) continue;
    e.adjoint(*this, e.grad);
  }
}

namespace {

const simd::KernelTable& K() { return simd::kernels(); }

[[noreturn]] void shape_fail(const std::string& layer, const std::string& what) {
  throw ShapeError(layer + ": " + what);
}

void require_rank(const std::string& layer, const char* name, const Tensor& t,
                  std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(layer, std::string(name) + " must have rank " + std::to_string(rank) +
                          ", got " + shape_string(t.shape()));
  }
}

// Unfolds output rows [oy0, oy1) of one [C,H,W] image into columns
// [C*kh*kw, (oy1-oy0)*ow].
void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t oy0, std::size_t oy1, double* col) {
  const std::size_t ow = w - kw + 1;
  const std::size_t cols = (oy1 - oy0) * ow;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = col + ((ci * kh + ky) * kw + kx) * cols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const double* src = x + (ci * h + oy + ky) * w + kx;
          std::copy(src, src + ow, dst + (oy - oy0) * ow);
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t oy0, std::size_t oy1, double* x) {
  const std::size_t ow = w - kw + 1;
  const std::size_t cols = (oy1 - oy0) * ow;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* src = col + ((ci * kh + ky) * kw + kx) * cols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          double* dst = x + (ci * h + oy + ky) * w + kx;
          const double* s = src + (oy - oy0) * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] += s[ox];
        }
      }
    }
  }
}

// Output rows per im2col tile, keeping a tile near 128 KiB so it stays in L2.
std::size_t conv_tile_rows(std::size_t ckk, std::size_t ow, std::size_t oh) {
  constexpr std::size_t kTileDoubles = 16384;
  return std::clamp<std::size_t>(kTileDoubles / (ckk * ow), 1, oh);
}

}  // namespace

// ---- layers -----------------------------------------------------------------

Var conv2d(Tape& tape, Var x, Var weight, Var bias) {
  const std::string layer = "conv2d";
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  require_rank(layer, "input", xv, 4);
  require_rank(layer, "weight", wv, 4);
  require_rank(layer, "bias", bv, 1);
  const std::size_t batch = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t f = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != c) {
    shape_fail(layer, "input has " + std::to_string(c) + " channels but weight " +
                          shape_string(wv.shape()) + " expects " +
                          std::to_string(wv.dim(1)));
  }
  if (bv.dim(0) != f) {
    shape_fail(layer, "bias " + shape_string(bv.shape()) + " does not match " +
                          std::to_string(f) + " filters");
  }
  if (kh > h || kw > w) {
    shape_fail(layer, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                          " larger than input " + shape_string(xv.shape()));
  }
  const std::size_t oh = h - kh + 1, ow = w - kw + 1, p = oh * ow;
  const std::size_t ckk = c * kh * kw;

  const std::size_t tile = conv_tile_rows(ckk, ow, oh);
  Tensor out(Shape{batch, f, oh, ow});
  std::vector<double> col(ckk * tile * ow);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = xv.data() + b * c * h * w;
    double* ob = out.data() + b * f * p;
    for (std::size_t fi = 0; fi < f; ++fi) std::fill(ob + fi * p, ob + (fi + 1) * p, bv[fi]);
    for (std::size_t oy0 = 0; oy0 < oh; oy0 += tile) {
      const std::size_t oy1 = std::min(oh, oy0 + tile);
      const std::size_t n = (oy1 - oy0) * ow;
      im2col(xb, c, h, w, kh, kw, oy0, oy1, col.data());
      K().gemm_nn(f, n, ckk, wv.data(), ckk, col.data(), n, ob + oy0 * ow, p);
    }
  }

  return tape.record(std::move(out), {x, weight, bias},
                     [=](Tape& t, const Tensor& gy) {
    const Tensor& xin = t.value(x);
    const Tensor& win = t.value(weight);
    const bool want_x = t.requires_grad(x);
    const bool want_w = t.requires_grad(weight);
    const bool want_b = t.requires_grad(bias);
    std::vector<double> colb(ckk * tile * ow);
    std::vector<double> wt;
    if (want_x) {
      wt.resize(ckk * f);
      for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t k = 0; k < ckk; ++k) wt[k * f + fi] = win[fi * ckk + k];
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gyb = gy.data() + b * f * p;
      const double* xb = xin.data() + b * c * h * w;
      if (want_b) {
        Tensor& gb = t.grad_buffer(bias);
        for (std::size_t fi = 0; fi < f; ++fi) {
          const double* row = gyb + fi * p;
          gb[fi] += std::accumulate(row, row + p, 0.0);
        }
      }
      for (std::size_t oy0 = 0; oy0 < oh; oy0 += tile) {
        const std::size_t oy1 = std::min(oh, oy0 + tile);
        const std::size_t n = (oy1 - oy0) * ow;
        const double* gyt = gyb + oy0 * ow;
        if (want_w) {
          im2col(xb, c, h, w, kh, kw, oy0, oy1, colb.data());
          K().gemm_nt(f, ckk, n, gyt, p, colb.data(), n, t.grad_buffer(weight).data(), ckk);
        }
        if (want_x) {
          std::fill(colb.begin(), colb.end(), 0.0);
          K().gemm_nn(ckk, n, f, wt.data(), f, gyt, p, colb.data(), n);
          col2im_add(colb.data(), c, h, w, kh, kw, oy0, oy1,
                     t.grad_buffer(x).data() + b * c * h * w);
        }
      }
    }
  });
}

Var max_pool2d(Tape& tape, Var x, const PoolWindow& win) {
  const std::string layer = "maxpool2d";
  const Tensor& xv = tape.value(x);
  require_rank(layer, "input", xv, 4);
  const std::size_t batch = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (win.height == 0 || win.width == 0 || win.stride_h == 0 || win.stride_w == 0) {
    shape_fail(layer, "window and stride must be positive");
  }
  if (win.height > h || win.width > w) {
    shape_fail(layer, "window " + std::to_string(win.height) + "x" +
                          std::to_string(win.width) + " larger than input " +
                          shape_string(xv.shape()));
  }
  const std::size_t oh = (h - win.height) / win.stride_h + 1;
  const std::size_t ow = (w - win.width) / win.stride_w + 1;
  Tensor out(Shape{batch, c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * c; ++bc) {
    const double* plane = xv.data() + bc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (oy * win.stride_h) * w + ox * win.stride_w;
        double best_v = plane[best];
        for (std::size_t ky = 0; ky < win.height; ++ky) {
          for (std::size_t kx = 0; kx < win.width; ++kx) {
            const std::size_t idx = (oy * win.stride_h + ky) * w + ox * win.stride_w + kx;
            if (plane[idx] > best_v) {
              best_v = plane[idx];
              best = idx;
            }
          }
        }
        out[o] = best_v;
        argmax[o] = bc * h * w + best;
      }
    }
  }
  return tape.record(std::move(out), {x},
                     [x, argmax = std::move(argmax)](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += gy[i];
  });
}

Var leaky_relu(Tape& tape, Var x, double slope) {
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape());
  K().leaky_relu(slope, xv.data(), out.data(), xv.size());
  return tape.record(std::move(out), {x}, [x, slope](Tape& t, const Tensor& gy) {
    const Tensor& xin = t.value(x);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += xin[i] >= 0.0 ? gy[i] : slope * gy[i];
  });
}

Var relu(Tape& tape, Var x) { return leaky_relu(tape, x, 0.0); }

Var linear(Tape& tape, Var x, Var weight, Var bias) {
  const std::string layer = "linear";
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  require_rank(layer, "input", xv, 2);
  require_rank(layer, "weight", wv, 2);
  require_rank(layer, "bias", bv, 1);
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (wv.dim(1) != in) {
    shape_fail(layer, "input width " + std::to_string(in) + " does not match weight " +
                          shape_string(wv.shape()));
  }
  if (bv.dim(0) != out_dim) {
    shape_fail(layer, "bias " + shape_string(bv.shape()) + " does not match weight " +
                          shape_string(wv.shape()));
  }
  Tensor out(Shape{batch, out_dim});
  for (std::size_t r = 0; r < batch; ++r)
    std::copy(bv.data(), bv.data() + out_dim, out.data() + r * out_dim);
  K().gemm_nt(batch, out_dim, in, xv.data(), in, wv.data(), in, out.data(), out_dim);

  return tape.record(std::move(out), {x, weight, bias}, [=](Tape& t, const Tensor& gy) {
    if (t.requires_grad(x)) {
      K().gemm_nn(batch, in, out_dim, gy.data(), out_dim, t.value(weight).data(), in,
                  t.grad_buffer(x).data(), in);
    }
    if (t.requires_grad(weight)) {
      std::vector<double> gyt(out_dim * batch);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) gyt[o * batch + r] = gy[r * out_dim + o];
      K().gemm_nn(out_dim, in, batch, gyt.data(), batch, t.value(x).data(), in,
                  t.grad_buffer(weight).data(), in);
    }
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad_buffer(bias);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gy[r * out_dim + o];
    }
  });
}

Var concat(Tape& tape, std::span<const Var> parts, std::size_t axis) {
  const std::string layer = "concat";
  if (parts.empty()) shape_fail(layer, "no inputs");
  const Shape& first = tape.value(parts[0]).shape();
  if (axis >= first.size()) {
    shape_fail(layer, "axis " + std::to_string(axis) + " out of range for " +
                          shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var v : parts) {
    const Shape& s = tape.value(v).shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      shape_fail(layer, "cannot join " + shape_string(s) + " with " +
                            shape_string(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];

  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = tape.value(parts[k]);
    const std::size_t chunk = widths[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv.data() + o * chunk, pv.data() + (o + 1) * chunk,
                out.data() + (o * total + offset) * inner);
    }
    offset += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts,
                     [inputs, widths, outer, inner, total](Tape& t, const Tensor& gy) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const std::size_t chunk = widths[k] * inner;
      if (t.requires_grad(inputs[k])) {
        Tensor& g = t.grad_buffer(inputs[k]);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = gy.data() + (o * total + off) * inner;
          double* dst = g.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      off += widths[k];
    }
  });
}

namespace {

void softmax_rows(const Tensor& x, Tensor& y, bool log_space) {
  const std::size_t m = x.rank() == 0 ? 1 : x.shape().back();
  const std::size_t rows = m == 0 ? 0 : x.size() / m;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * m;
    double* out = y.data() + r * m;
    const double mx = *std::max_element(in, in + m);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += std::exp(in[i] - mx);
    if (log_space) {
      const double lse = mx + std::log(s);
      for (std::size_t i = 0; i < m; ++i) out[i] = in[i] - lse;
    } else {
      for (std::size_t i = 0; i < m; ++i) out[i] = std::exp(in[i] - mx) / s;
    }
  }
}

}  // namespace

Var softmax(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() == 0 || xv.shape().back() == 0) {
    shape_fail("softmax", "input " + shape_string(xv.shape()) + " has no last axis");
  }
  Tensor out(xv.shape());
  softmax_rows(xv, out, false);
  const std::size_t m = xv.shape().back();
  Tensor probs = out;
  return tape.record(std::move(out), {x},
                     [x, m, probs = std::move(probs)](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < probs.size() / m; ++r) {
      const double* yr = probs.data() + r * m;
      const double* gr = gy.data() + r * m;
      double dotp = 0.0;
      for (std::size_t i = 0; i < m; ++i) dotp += yr[i] * gr[i];
      double* gxr = gx.data() + r * m;
      for (std::size_t i = 0; i < m; ++i) gxr[i] += yr[i] * (gr[i] - dotp);
    }
  });
}

Var log_softmax(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() == 0 || xv.shape().back() == 0) {
    shape_fail("log_softmax", "input " + shape_string(xv.shape()) + " has no last axis");
  }
  Tensor out(xv.shape());
  softmax_rows(xv, out, true);
  const std::size_t m = xv.shape().back();
  Tensor probs(xv.shape());
  softmax_rows(xv, probs, false);
  return tape.record(std::move(out), {x},
                     [x, m, probs = std::move(probs)](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < probs.size() / m; ++r) {
      const double* gr = gy.data() + r * m;
      const double s = std::accumulate(gr, gr + m, 0.0);
      for (std::size_t i = 0; i < m; ++i) gx[r * m + i] += gr[i] - probs[r * m + i] * s;
    }
  });
}

Var segment_max(Tape& tape, Var x, std::span<const std::size_t> segment,
                std::size_t num_segments) {
  const std::string layer = "elementwise_max_reduce";
  const Tensor& xv = tape.value(x);
  require_rank(layer, "input", xv, 2);
  const std::size_t rows = xv.dim(0), d = xv.dim(1);
  if (segment.size() != rows) {
    shape_fail(layer, "segment list has " + std::to_string(segment.size()) +
                          " entries for " + std::to_string(rows) + " rows");
  }
  Tensor out(Shape{num_segments, d}, 0.0);
  // winner[s*d + j] = input row that supplied the maximum, or rows if none.
  std::vector<std::size_t> winner(num_segments * d, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = segment[r];
    if (s >= num_segments) {
      shape_fail(layer, "segment id " + std::to_string(s) + " >= " +
                            std::to_string(num_segments));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double v = xv[r * d + j];
      std::size_t& wi = winner[s * d + j];
      if (wi == rows || v > out[s * d + j]) {
        out[s * d + j] = v;
        wi = r;
      }
    }
  }
  return tape.record(std::move(out), {x},
                     [x, d, rows, winner = std::move(winner)](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < winner.size(); ++i) {
      if (winner[i] != rows) gx[winner[i] * d + i % d] += gy[i];
    }
  });
}

Var max_reduce(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require_rank("elementwise_max_reduce", "input", xv, 2);
  if (xv.dim(0) == 0) shape_fail("elementwise_max_reduce", "empty input set");
  const std::size_t d = xv.dim(1);
  std::vector<std::size_t> seg(xv.dim(0), 0);
  return reshape(tape, segment_max(tape, x, seg, 1), Shape{d});
}

// ---- helpers ----------------------------------------------------------------

Var gather_rows(Tape& tape, Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() == 0) shape_fail("gather_rows", "input is a scalar");
  const std::size_t n = xv.dim(0);
  const std::size_t stride = n == 0 ? 0 : xv.size() / n;
  Shape shape = xv.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      shape_fail("gather_rows", "row " + std::to_string(rows[i]) + " out of range for " +
                                    shape_string(xv.shape()));
    }
    std::copy(xv.data() + rows[i] * stride, xv.data() + (rows[i] + 1) * stride,
              out.data() + i * stride);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(std::move(out), {x}, [x, stride, idx](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      K().axpy(1.0, gy.data() + i * stride, gx.data() + idx[i] * stride, stride);
    }
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    K().axpy(1.0, gy.data(), gx.data(), gy.size());
  });
}

Var select_rows(Tape& tape, const std::vector<bool>& take_a, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape() || av.rank() == 0 || av.dim(0) != take_a.size()) {
    shape_fail("select_rows", "operands " + shape_string(av.shape()) + " and " +
                                  shape_string(bv.shape()) + " with mask of " +
                                  std::to_string(take_a.size()));
  }
  const std::size_t stride = av.dim(0) == 0 ? 0 : av.size() / av.dim(0);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < take_a.size(); ++r) {
    const Tensor& src = take_a[r] ? av : bv;
    std::copy(src.data() + r * stride, src.data() + (r + 1) * stride, out.data() + r * stride);
  }
  return tape.record(std::move(out), {a, b}, [a, b, take_a, stride](Tape& t, const Tensor& gy) {
    for (std::size_t r = 0; r < take_a.size(); ++r) {
      const Var target = take_a[r] ? a : b;
      if (!t.requires_grad(target)) continue;
      K().axpy(1.0, gy.data() + r * stride, t.grad_buffer(target).data() + r * stride, stride);
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    shape_fail("add", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  K().axpy(1.0, bv.data(), out.data(), out.size());
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& gy) {
    if (t.requires_grad(a)) K().axpy(1.0, gy.data(), t.grad_buffer(a).data(), gy.size());
    if (t.requires_grad(b)) K().axpy(1.0, gy.data(), t.grad_buffer(b).data(), gy.size());
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    shape_fail("mul", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& gy) {
    const Tensor& ai = t.value(a);
    const Tensor& bi = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bi[i];
    }
    if (t.requires_grad(b)) {
      Tensor& g = t.grad_buffer(b);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * ai[i];
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v *= factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape& t, const Tensor& gy) {
    K().axpy(factor, gy.data(), t.grad_buffer(x).data(), gy.size());
  });
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const double s = std::accumulate(xv.values().begin(), xv.values().end(), 0.0);
  return tape.record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& gy) {
    Tensor& gx = t.grad_buffer(x);
    const double g = gy[0];
    for (double& v : gx.values()) v += g;
  });
}

Var softmax_cross_entropy(Tape& tape, Var logits, const Tensor& target,
                          std::span<const std::size_t> rows) {
  const std::string layer = "softmax_cross_entropy";
  const Tensor& zv = tape.value(logits);
  require_rank(layer, "logits", zv, 2);
  if (target.shape() != zv.shape()) {
    shape_fail(layer, "target " + shape_string(target.shape()) + " vs logits " +
                          shape_string(zv.shape()));
  }
  const std::size_t m = zv.dim(1);
  Tensor logp(zv.shape());
  softmax_rows(zv, logp, true);
  double loss = 0.0;
  for (const std::size_t r : rows) {
    if (r >= zv.dim(0)) shape_fail(layer, "row " + std::to_string(r) + " out of range");
    for (std::size_t i = 0; i < m; ++i) {
      const double ti = target[r * m + i];
      if (ti != 0.0) loss -= ti * logp[r * m + i];
    }
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(Tensor::scalar(loss), {logits},
                     [logits, target, idx, m, logp = std::move(logp)](Tape& t, const Tensor& gy) {
    Tensor& gz = t.grad_buffer(logits);
    const double g = gy[0];
    for (const std::size_t r : idx) {
      double mass = 0.0;
      for (std::size_t i = 0; i < m; ++i) mass += target[r * m + i];
      for (std::size_t i = 0; i < m; ++i) {
        gz[r * m + i] += g * (std::exp(logp[r * m + i]) * mass - target[r * m + i]);
      }
    }
  });
}

// ---- generic dispatch -----------------------------------------------------------

std::string layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kElementwiseMaxReduce: return "elementwise_max_reduce";
  }
  return "unknown";
}

Var layer_forward(Tape& tape, LayerKind kind, std::span<const Var> inputs,
                  std::span<const Var> weights, const LayerOptions& options) {
  const auto expect = [&](std::size_t n_in, std::size_t n_w) {
    if (inputs.size() != n_in || weights.size() != n_w) {
      shape_fail(layer_name(kind), "expects " + std::to_string(n_in) + " input(s) and " +
                                       std::to_string(n_w) + " weight(s), got " +
                                       std::to_string(inputs.size()) + " and " +
                                       std::to_string(weights.size()));
    }
  };
  switch (kind) {
    case LayerKind::kConv2d:
      expect(1, 2);
      return conv2d(tape, inputs[0], weights[0], weights[1]);
    case LayerKind::kMaxPool2d:
      expect(1, 0);
      return max_pool2d(tape, inputs[0], options.pool);
    case LayerKind::kRelu:
      expect(1, 0);
      return relu(tape, inputs[0]);
    case LayerKind::kLeakyRelu:
      expect(1, 0);
      return leaky_relu(tape, inputs[0], options.slope);
    case LayerKind::kLinear:
      expect(1, 2);
      return linear(tape, inputs[0], weights[0], weights[1]);
    case LayerKind::kConcat:
      if (!weights.empty()) expect(inputs.size(), 0);
      return concat(tape, inputs, options.axis);
    case LayerKind::kSoftmax:
      expect(1, 0);
      return softmax(tape, inputs[0]);
    case LayerKind::kElementwiseMaxReduce:
      if (inputs.size() == 1 && weights.empty()) return max_reduce(tape, inputs[0]);
      {
        // A set of equally shaped vectors: stack, then reduce.
        if (!weights.empty() || inputs.empty()) expect(1, 0);
        std::vector<Var> rows;
        for (const Var v : inputs) {
          rows.push_back(reshape(tape, v, Shape{1, tape.value(v).size()}));
        }
        return max_reduce(tape, concat(tape, rows, 0));
      }
  }
  shape_fail(layer_name(kind), "unknown layer kind");
}

}  // namespace rtgnn::ad
