#include "mtlfno/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mtlfno/error.hpp"

namespace mtlfno {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor extents must be positive, got " +
                       shape_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::eye(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " +
                     shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                     shape_string(shape));
  }
  Tensor out(std::move(shape));
  std::copy(data_.begin(), data_.end(), out.data_.begin());
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

ComplexTensor::ComplexTensor(Tensor real, Tensor imag)
    : re(std::move(real)), im(std::move(imag)) {
  if (re.shape() != im.shape()) {
    throw ShapeError("complex parts differ in shape: " +
                     shape_string(re.shape()) + " vs " +
                     shape_string(im.shape()));
  }
}

ComplexTensor::ComplexTensor(const Shape& shape) : re(shape), im(shape) {}

ComplexTensor ComplexTensor::eye(std::size_t n) {
  return ComplexTensor(Tensor::eye(n), Tensor({n, n}));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  return std::max(max_abs_diff(a.re, b.re), max_abs_diff(a.im, b.im));
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return std::sqrt(s);
}

}  // namespace mtlfno
