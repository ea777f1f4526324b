#include "slicerec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slicerec/errors.hpp"

namespace slicerec::ad {

std::int64_t Tensor::shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  if (t.shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  if (shape_numel(t.shape_) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("data size does not match shape " + t.shape_str());
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double x : data_) m = std::min(m, x);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : data_) m = std::max(m, x);
  return m;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace slicerec::ad
