#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include "rtgnn/autodiff.hpp"
#include "rtgnn/parameters.hpp"
#include "rtgnn/serialize.hpp"
#include "rtgnn/tensor.hpp"
#include "rtgnn/traffic.hpp"

namespace rtgnn {
namespace {

using ad::Tape;
using ad::Var;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = lo + (hi - lo) * uniform_unit(rng);
  return t;
}

using LayerFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// loss = sum(out * R) for a fixed random R; returns the loss and, when
// requested, the gradients of every input.
double weighted_loss(const LayerFn& fn, const std::vector<Tensor>& inputs, const Tensor* weights,
                     std::vector<Tensor>* grads, Tensor* out_value = nullptr) {
  Tape tape(grads != nullptr);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
  const Var out = fn(tape, vars);
  if (out_value != nullptr) *out_value = tape.value(out);
  Var w = tape.constant(weights != nullptr ? *weights : Tensor(tape.value(out).shape(), 1.0));
  const Var loss = ad::sum(tape, ad::mul(tape, out, w));
  const double value = tape.value(loss).item();
  if (grads != nullptr) {
    tape.backward(loss);
    grads->clear();
    for (const Var v : vars) {
      const Tensor* g = tape.grad(v);
      grads->push_back(g != nullptr ? *g : Tensor(tape.value(v).shape(), 0.0));
    }
  }
  return value;
}

// Largest |analytic - numeric| / max(1, |numeric|) over every input element.
double layer_gradient_error(const LayerFn& fn, const std::vector<Tensor>& inputs,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor out;
  weighted_loss(fn, inputs, nullptr, nullptr, &out);
  const Tensor weights = random_tensor(out.shape(), rng);
  std::vector<Tensor> grads;
  weighted_loss(fn, inputs, &weights, &grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double numeric = (weighted_loss(fn, plus, &weights, nullptr) -
                              weighted_loss(fn, minus, &weights, nullptr)) /
                             (2.0 * h);
      worst = std::max(worst, std::abs(grads[k][i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

TEST(Tensor, ShapeAndScalar) {
  const Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.item(), 2.5);
  const Tensor t({2, 3}, 1.0);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Layers, DeltaKernelConvolutionIsCentreCrop) {
  Tensor x({1, 1, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) x[i] = static_cast<double>(i);
  Tensor w({1, 1, 3, 3}, 0.0);
  w[4] = 1.0;
  Tape tape(false);
  const Var y = ad::conv2d(tape, tape.constant(x), tape.constant(w), tape.constant(Tensor({1}, 0.0)));
  const Tensor& out = tape.value(y);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out[r * 3 + c], x[(r + 1) * 5 + (c + 1)]);
  }
}

TEST(Layers, SoftmaxOfZerosIsUniform) {
  Tape tape(false);
  const Var y = ad::layer_forward(tape, ad::LayerKind::kSoftmax,
                                  std::vector<Var>{tape.constant(Tensor({4}, 0.0))}, {});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(tape.value(y)[i], 0.25);
}

TEST(Layers, ElementwiseMaxReduce) {
  Tape tape(false);
  const Var y = ad::layer_forward(tape, ad::LayerKind::kElementwiseMaxReduce,
                                  std::vector<Var>{tape.constant(Tensor({2, 2}, {1.0, -2.0, 0.0, 3.0}))},
                                  {});
  EXPECT_EQ(tape.value(y), Tensor({2}, std::vector<double>{1.0, 3.0}));
}

TEST(Layers, ElementwiseMaxReduceIsPermutationInvariant) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({6, 5}, rng);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tape tape(false);
  const Var a = ad::max_reduce(tape, tape.constant(x));
  const Var b = ad::max_reduce(tape, ad::gather_rows(tape, tape.constant(x), perm));
  EXPECT_EQ(tape.value(a), tape.value(b));
}

TEST(Layers, SoftmaxRowsAreDistributions) {
  std::mt19937_64 rng(5);
  Tape tape(false);
  const Var y = ad::softmax(tape, tape.constant(random_tensor({7, 441}, rng, -30.0, 30.0)));
  const Tensor& p = tape.value(y);
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < 441; ++i) {
      EXPECT_GE(p[r * 441 + i], 0.0);
      s += p[r * 441 + i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Layers, ShapeErrorsNameTheLayer) {
  Tape tape(false);
  const Var x = tape.constant(Tensor({1, 2, 5, 5}));
  const Var w = tape.constant(Tensor({3, 4, 3, 3}));
  const Var b = tape.constant(Tensor({3}));
  try {
    ad::conv2d(tape, x, w, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ad::linear(tape, tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 5})),
                          tape.constant(Tensor({4}))),
               ShapeError);
  const std::vector<Var> parts = {tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 3}))};
  EXPECT_THROW(ad::concat(tape, parts, 1), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var p = tape.parameter(Tensor({3, 2}, 0.7));
  tape.backward(ad::sum(tape, p));
  EXPECT_EQ(*tape.grad(p), Tensor({3, 2}, 1.0));
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  const Var p = tape.parameter(Tensor({3}, 1.0));
  EXPECT_THROW(tape.backward(p), ShapeError);
}

TEST(Backward, CrossEntropyAtItsOwnSoftmaxIsStationary) {
  std::mt19937_64 rng(6);
  const Tensor logits = random_tensor({1, 9}, rng, -2.0, 2.0);
  Tape probe(false);
  const Tensor target = probe.value(ad::softmax(probe, probe.constant(logits)));
  Tape tape;
  const Var z = tape.parameter(logits);
  const std::vector<std::size_t> rows = {0};
  tape.backward(ad::softmax_cross_entropy(tape, z, target, rows));
  for (const double g : tape.grad(z)->values()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Backward, MaxPoolRoutesToFirstMaximum) {
  Tape tape;
  const Var x = tape.parameter(Tensor({1, 1, 2, 2}, 5.0));
  tape.backward(ad::sum(tape, ad::max_pool2d(tape, x, {})));
  EXPECT_EQ(*tape.grad(x), Tensor({1, 1, 2, 2}, std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(Backward, SegmentMaxTiesGoToFirstRow) {
  Tape tape;
  const Var x = tape.parameter(Tensor({3, 1}, std::vector<double>{2.0, 2.0, 1.0}));
  const std::vector<std::size_t> seg = {0, 0, 0};
  tape.backward(ad::sum(tape, ad::segment_max(tape, x, seg, 2)));
  EXPECT_EQ(*tape.grad(x), Tensor({3, 1}, std::vector<double>{1.0, 0.0, 0.0}));
}

// Every layer kind against central differences on small random shapes.
TEST(Gradients, EveryLayerMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  const auto conv = [](Tape& t, const std::vector<Var>& v) { return ad::conv2d(t, v[0], v[1], v[2]); };
  EXPECT_LT(layer_gradient_error(conv,
                                 {random_tensor({2, 3, 7, 6}, rng), random_tensor({4, 3, 3, 2}, rng),
                                  random_tensor({4}, rng)},
                                 1),
            1e-4);
  const auto pool = [](Tape& t, const std::vector<Var>& v) {
    return ad::max_pool2d(t, v[0], {2, 2, 2, 2});
  };
  EXPECT_LT(layer_gradient_error(pool, {random_tensor({2, 2, 6, 5}, rng)}, 2), 1e-4);
  const auto relu = [](Tape& t, const std::vector<Var>& v) { return ad::relu(t, v[0]); };
  EXPECT_LT(layer_gradient_error(relu, {random_tensor({5, 7}, rng)}, 3), 1e-4);
  const auto leaky = [](Tape& t, const std::vector<Var>& v) { return ad::leaky_relu(t, v[0], 0.01); };
  EXPECT_LT(layer_gradient_error(leaky, {random_tensor({5, 7}, rng)}, 4), 1e-4);
  const auto linear = [](Tape& t, const std::vector<Var>& v) { return ad::linear(t, v[0], v[1], v[2]); };
  EXPECT_LT(layer_gradient_error(linear,
                                 {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng),
                                  random_tensor({4}, rng)},
                                 5),
            1e-4);
  const auto cat = [](Tape& t, const std::vector<Var>& v) { return ad::concat(t, v, 1); };
  EXPECT_LT(layer_gradient_error(cat, {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)}, 6),
            1e-4);
  const auto soft = [](Tape& t, const std::vector<Var>& v) { return ad::softmax(t, v[0]); };
  EXPECT_LT(layer_gradient_error(soft, {random_tensor({3, 6}, rng)}, 7), 1e-4);
  const auto logsoft = [](Tape& t, const std::vector<Var>& v) { return ad::log_softmax(t, v[0]); };
  EXPECT_LT(layer_gradient_error(logsoft, {random_tensor({3, 6}, rng)}, 8), 1e-4);
  const auto maxr = [](Tape& t, const std::vector<Var>& v) { return ad::max_reduce(t, v[0]); };
  EXPECT_LT(layer_gradient_error(maxr, {random_tensor({5, 4}, rng)}, 9), 1e-4);
  const auto segmax = [](Tape& t, const std::vector<Var>& v) {
    const std::vector<std::size_t> seg = {1, 0, 1, 1, 3};
    return ad::segment_max(t, v[0], seg, 4);
  };
  EXPECT_LT(layer_gradient_error(segmax, {random_tensor({5, 3}, rng)}, 10), 1e-4);
  const auto sel = [](Tape& t, const std::vector<Var>& v) {
    return ad::select_rows(t, {true, false, true}, v[0], v[1]);
  };
  EXPECT_LT(layer_gradient_error(sel, {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)}, 11),
            1e-4);
  const auto gather = [](Tape& t, const std::vector<Var>& v) {
    const std::vector<std::size_t> rows = {2, 0, 2};
    return ad::gather_rows(t, v[0], rows);
  };
  EXPECT_LT(layer_gradient_error(gather, {random_tensor({3, 4}, rng)}, 12), 1e-4);
  const Tensor target = [&] {
    Tensor t({2, 5}, 0.0);
    t[1] = 0.3;
    t[3] = 0.7;
    t[5] = 1.0;
    return t;
  }();
  const auto xent = [target](Tape& t, const std::vector<Var>& v) {
    const std::vector<std::size_t> rows = {0, 1};
    return ad::softmax_cross_entropy(t, v[0], target, rows);
  };
  EXPECT_LT(layer_gradient_error(xent, {random_tensor({2, 5}, rng)}, 13), 1e-4);
}

// Hand-written 3 -> 4 -> 1 perceptron with its own forward pass; the tape
// gradient must match central differences of that independent forward.
TEST(Gradients, TwoLayerPerceptronOracle) {
  std::mt19937_64 rng(2024);
  const Tensor x = random_tensor({1, 3}, rng);
  Tensor w1 = random_tensor({4, 3}, rng), b1 = random_tensor({4}, rng);
  Tensor w2 = random_tensor({1, 4}, rng), b2 = random_tensor({1}, rng);
  const auto forward = [&](const Tensor& W1, const Tensor& B1, const Tensor& W2, const Tensor& B2) {
    double out = B2[0];
    for (std::size_t j = 0; j < 4; ++j) {
      double h = B1[j];
      for (std::size_t i = 0; i < 3; ++i) h += W1[j * 3 + i] * x[i];
      h = h >= 0.0 ? h : 0.01 * h;
      out += W2[j] * h;
    }
    return out;
  };
  Tape tape;
  const Var vw1 = tape.parameter(w1), vb1 = tape.parameter(b1);
  const Var vw2 = tape.parameter(w2), vb2 = tape.parameter(b2);
  const Var h = ad::leaky_relu(tape, ad::linear(tape, tape.constant(x), vw1, vb1), 0.01);
  const Var y = ad::sum(tape, ad::linear(tape, h, vw2, vb2));
  EXPECT_NEAR(tape.value(y).item(), forward(w1, b1, w2, b2), 1e-14);
  tape.backward(y);

  const double step = 1e-5;
  std::vector<std::pair<Tensor*, Var>> all = {{&w1, vw1}, {&b1, vb1}, {&w2, vw2}, {&b2, vb2}};
  for (auto& [param, var] : all) {
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double keep = (*param)[i];
      (*param)[i] = keep + step;
      const double up = forward(w1, b1, w2, b2);
      (*param)[i] = keep - step;
      const double down = forward(w1, b1, w2, b2);
      (*param)[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = (*tape.grad(var))[i];
      EXPECT_LT(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)), 1e-4);
    }
  }
}

TEST(Gradients, NoGradTapeDropsAdjoints) {
  Tape tape(false);
  const Var p = tape.parameter(Tensor({2}, 1.0));
  EXPECT_FALSE(tape.requires_grad(p));
}

ParameterStore two_tensor_store() {
  ParameterStore s;
  s.add("a", Tensor({2, 3}, std::vector<double>{0.1, -0.2, 0.3, 0.4, -0.5, 0.6}));
  s.add("b", Tensor({2}, std::vector<double>{1.5, -2.5}));
  return s;
}

TEST(FiniteDifference, SquaredNormIsExact) {
  const Objective f = [](const ParameterStore& p, bool with_gradient) {
    Evaluation e;
    for (const auto& [name, t] : p.entries()) {
      Tensor g(t.shape());
      for (std::size_t i = 0; i < t.size(); ++i) {
        e.value += t[i] * t[i];
        g[i] = 2.0 * t[i];
      }
      if (with_gradient) e.gradient[name] = g;
    }
    return e;
  };
  const auto report = finite_difference_check(f, two_tensor_store());
  EXPECT_LT(report.max_relative_error, 1e-8);
  EXPECT_EQ(report.coordinates_checked, 8u);
}

// Negative control: an operation whose adjoint is deliberately doubled.
TEST(FiniteDifference, CorruptedAdjointIsCaught) {
  const Objective f = [](const ParameterStore& p, bool with_gradient) {
    Tape tape(with_gradient);
    const Var a = tape.parameter(p.at("a"));
    const Var b = tape.parameter(p.at("b"));
    const Tensor& av = tape.value(a);
    Tensor sq(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) sq[i] = av[i] * av[i];
    const Var broken = tape.record(sq, {a}, [a](Tape& t, const Tensor& g) {
      Tensor& ga = t.grad_buffer(a);
      const Tensor& x = t.value(a);
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 4.0 * x[i] * g[i];  // should be 2x
    });
    const Var loss = ad::add(tape, ad::sum(tape, broken), ad::sum(tape, b));
    Evaluation e{tape.value(loss).item(), {}};
    if (with_gradient) {
      tape.backward(loss);
      e.gradient["a"] = *tape.grad(a);
      e.gradient["b"] = *tape.grad(b);
    }
    return e;
  };
  const auto report = finite_difference_check(f, two_tensor_store());
  EXPECT_GT(report.max_relative_error, 1e-2);
  EXPECT_EQ(report.worst_parameter, "a");
}

TEST(FiniteDifference, NonFiniteValueNamesTheParameter) {
  const Objective f = [](const ParameterStore& p, bool with_gradient) {
    Evaluation e{std::log(p.at("b")[1]), {}};
    if (with_gradient) {
      e.gradient["a"] = Tensor(p.at("a").shape(), 0.0);
      e.gradient["b"] = Tensor(p.at("b").shape(), 0.0);
    }
    return e;
  };
  try {
    finite_difference_check(f, two_tensor_store());
    FAIL() << "expected a non-finite report";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find('b'), std::string::npos) << e.what();
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore p = two_tensor_store();
  const ParameterStore before = p;
  AdamState state;
  GradientMap g = {{"a", Tensor({2, 3}, 0.0)}, {"b", Tensor({2}, 0.0)}};
  adam_step(p, g, state);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1u);
  EXPECT_EQ(state.first_moment.at("a"), Tensor({2, 3}, 0.0));
  EXPECT_EQ(state.second_moment.at("b"), Tensor({2}, 0.0));
}

TEST(Adam, FirstStepMagnitudeEqualsLearningRate) {
  ParameterStore p;
  p.add("w", Tensor::scalar(0.0));
  AdamState state;
  adam_step(p, {{"w", Tensor::scalar(1.0)}}, state);
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(p.at("w").item(), -2e-3, 1e-10);
}

TEST(Adam, DeterministicAndRejectsMissingGradient) {
  ParameterStore p1 = two_tensor_store(), p2 = two_tensor_store();
  AdamState s1, s2;
  const GradientMap g = {{"a", Tensor({2, 3}, 0.3)}, {"b", Tensor({2}, -0.1)}};
  for (int i = 0; i < 2; ++i) {
    adam_step(p1, g, s1);
    adam_step(p2, g, s2);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(s1, s2);
  EXPECT_THROW(adam_step(p1, {{"a", Tensor({2, 3}, 0.3)}}, s1), std::invalid_argument);
  EXPECT_THROW(adam_step(p1, {{"a", Tensor({3, 2}, 0.3)}, {"b", Tensor({2}, 0.0)}}, s1),
               std::invalid_argument);
}

TEST(Serialize, ScalarRoundTrip) {
  const Tensor s = Tensor::scalar(-3.25);
  EXPECT_EQ(tensor_deserialize(tensor_serialize(s)), s);
}

TEST(Serialize, SequentialTensorRoundTripsBitExactly) {
  Tensor t({21, 21, 6});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) / 7.0;
  const Tensor back = tensor_deserialize(tensor_serialize(t));
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data(), t.data(), t.size() * sizeof(double)), 0);
}

TEST(Serialize, CorruptStreamsAreRejected) {
  auto bytes = tensor_serialize(Tensor({2, 2}, 1.0));
  auto flipped = bytes;
  flipped[0] ^= 0xFF;
  EXPECT_THROW(tensor_deserialize(flipped), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(tensor_deserialize(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(tensor_deserialize(trailing), FormatError);
}

TEST(Serialize, ContainerRoundTrip) {
  CheckpointContainer c;
  c.model_digest = 0x1234;
  c.train_digest = 0x5678;
  c.tensors = {{"x", Tensor({3}, 2.0)}, {"y", Tensor::scalar(1.0)}};
  const auto bytes = encode_container(c);
  EXPECT_EQ(decode_container(bytes), c);
  auto bad = bytes;
  bad[0] ^= 0x01;
  EXPECT_THROW(decode_container(bad), FormatError);
  EXPECT_THROW(c.find("z"), FormatError);
}

}  // namespace
}  // namespace rtgnn
