#include "rtgnn/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rtgnn {

void ParameterStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const Tensor& ParameterStore::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

Tensor& ParameterStore::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state) {
  for (const auto& [name, value] : params.entries()) {
    const auto it = grads.find(name);
    if (it == grads.end()) {
      throw std::invalid_argument("adam_step: no gradient for parameter '" + name + "'");
    }
    if (it->second.shape() != value.shape()) {
      throw std::invalid_argument("adam_step: gradient for '" + name + "' has shape " +
                                  shape_string(it->second.shape()) + ", parameter has " +
                                  shape_string(value.shape()));
    }
  }
  state.step += 1;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (auto& [name, value] : params.entries()) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, value.shape(), 0.0);
    auto [v_it, v_new] = state.second_moment.try_emplace(name, value.shape(), 0.0);
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

GradCheckReport finite_difference_check(const Objective& objective,
                                        const ParameterStore& params,
                                        const GradCheckOptions& options) {
  const Evaluation base = objective(params, true);
  if (!std::isfinite(base.value)) {
    throw std::runtime_error("gradcheck: objective is not finite at the base point");
  }
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  ParameterStore probe = params;
  for (const auto& [name, value] : params.entries()) {
    const auto git = base.gradient.find(name);
    if (git == base.gradient.end()) {
      throw std::runtime_error("gradcheck: no analytic gradient for '" + name + "'");
    }
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.coordinates_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coordinates_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    Tensor& slot = probe.at(name);
    for (const std::size_t i : coords) {
      const double original = slot[i];
      slot[i] = original + options.step;
      const double up = objective(probe, false).value;
      slot[i] = original - options.step;
      const double down = objective(probe, false).value;
      slot[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = git->second[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        throw std::runtime_error("gradcheck: non-finite value for parameter '" + name +
                                 "' at index " + std::to_string(i));
      }
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coordinates_checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = err;
        report.worst_parameter = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace rtgnn
