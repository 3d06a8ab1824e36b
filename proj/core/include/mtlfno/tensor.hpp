#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace mtlfno {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocation, so vectorized kernels see the same
/// alignment (and round identically) wherever a buffer lands on the heap.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of 64-bit floats.
///
/// Extents are positive; a rank-0 tensor holds one value. Operations never
/// mutate their inputs, so a constructed tensor can be shared freely.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor eye(std::size_t n);
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::vector<double> values() const { return {data_.begin(), data_.end()}; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  /// Value of a rank-0 (or single-element) tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<double, AlignedAllocator<double>> data_;
};

/// Real/imaginary pair of equally shaped tensors.
struct ComplexTensor {
  Tensor re;
  Tensor im;

  ComplexTensor() = default;
  ComplexTensor(Tensor real, Tensor imag);
  explicit ComplexTensor(const Shape& shape);

  static ComplexTensor eye(std::size_t n);

  const Shape& shape() const noexcept { return re.shape(); }
  std::size_t size() const noexcept { return re.size(); }
};

/// Maximum absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b);
double frobenius_norm(const Tensor& a);

}  // namespace mtlfno
