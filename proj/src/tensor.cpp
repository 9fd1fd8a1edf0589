#include "rtgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rtgnn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(shape_) + " as " +
                     shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace rtgnn
