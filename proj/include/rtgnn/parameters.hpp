#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtgnn/tensor.hpp"

namespace rtgnn {

using GradientMap = std::map<std::string, Tensor>;

// Named parameter tensors in insertion order.
class ParameterStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t tensor_count() const { return entries_.size(); }
  // Total number of scalars across all tensors.
  std::size_t scalar_count() const;

  bool operator==(const ParameterStore& other) const = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct AdamHyper {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamHyper& other) const = default;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  GradientMap first_moment;
  GradientMap second_moment;

  bool operator==(const AdamState& other) const = default;
};

// Bias-corrected Adam update applied in place. Throws std::invalid_argument if
// a parameter has no gradient or a gradient's shape differs from its parameter.
void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state);

// Result of evaluating a scalar objective at a parameter point.
struct Evaluation {
  double value = 0.0;
  GradientMap gradient;  // empty when not requested
};

using Objective = std::function<Evaluation(const ParameterStore&, bool with_gradient)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per tensor; tensors smaller than this are probed fully.
  std::size_t coordinates_per_tensor = 16;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

// Compares analytic gradients against central differences,
// |analytic - numeric| / max(1, |numeric|). Throws std::runtime_error naming
// the parameter when a non-finite value appears.
GradCheckReport finite_difference_check(const Objective& objective,
                                        const ParameterStore& params,
                                        const GradCheckOptions& options = {});

}  // namespace rtgnn
