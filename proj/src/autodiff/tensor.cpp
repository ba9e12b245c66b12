#include "mtvrp/autodiff/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace mtvrp::ad {

namespace {
std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> v) {
  return Tensor(Shape{static_cast<int>(v.size())}, std::vector<double>(v));
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> v) {
  return Tensor(Shape{rows, cols}, std::vector<double>(v));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace mtvrp::ad
