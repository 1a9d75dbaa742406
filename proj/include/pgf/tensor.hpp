// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pgf/common.hpp"
#include "pgf/meter.hpp"

namespace pgf {

/// Row-major shape of rank 1..3.
struct Shape {
  std::array<std::size_t, 3> dims{1, 1, 1};
  int rank = 1;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> d) : rank(static_cast<int>(d.size())) {
    assert(d.size() >= 1 && d.size() <= 3);
    std::copy(d.begin(), d.end(), dims.begin());
  }
  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t operator[](int i) const { return dims[static_cast<std::size_t>(i)]; }
  friend bool operator==(const Shape& a, const Shape& b) { return a.rank == b.rank && a.dims == b.dims; }
  std::string str() const;
};

/// Owning dense row-major tensor. Optionally accounts its bytes with a MemoryMeter;
/// copies register their own bytes under the same tag.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, MemTag tag = {}) : shape_(shape), data_(shape.size(), T{}), lease_(tag, shape.size() * sizeof(T)) {}
  Tensor(Shape shape, std::vector<T> values, MemTag tag = {})
      : shape_(shape), data_(std::move(values)), lease_(tag, shape.size() * sizeof(T)) {
    if (data_.size() != shape_.size()) throw ShapeError("Tensor: value count does not match shape " + shape_.str());
  }

  Tensor(const Tensor& o) : shape_(o.shape_), data_(o.data_), lease_(o.lease_.tag(), o.lease_.bytes()) {}
  Tensor& operator=(const Tensor& o) {
    if (this != &o) {
      shape_ = o.shape_;
      data_ = o.data_;
      lease_ = MeterLease(o.lease_.tag(), o.lease_.bytes());
    }
    return *this;
  }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(int i) const { return shape_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  /// Slice along the leading dimension.
  std::span<T> row(std::size_t i) {
    const std::size_t stride = shape_.dims[1] * shape_.dims[2];
    return {data_.data() + i * stride, stride};
  }
  std::span<const T> row(std::size_t i) const {
    const std::size_t stride = shape_.dims[1] * shape_.dims[2];
    return {data_.data() + i * stride, stride};
  }
  /// Rows [begin, begin + count) along the leading dimension.
  std::span<const T> rows(std::size_t begin, std::size_t count) const {
    const std::size_t stride = shape_.dims[1] * shape_.dims[2];
    return {data_.data() + begin * stride, count * stride};
  }
  std::span<T> rows(std::size_t begin, std::size_t count) {
    const std::size_t stride = shape_.dims[1] * shape_.dims[2];
    return {data_.data() + begin * stride, count * stride};
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_.dims[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_.dims[1] + j]; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_.dims[1] + j) * shape_.dims[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_.dims[1] + j) * shape_.dims[2] + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  MemTag tag() const { return lease_.tag(); }

  template <typename U>
  Tensor<U> cast(MemTag tag = {}) const {
    Tensor<U> out(shape_, tag);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
  MeterLease lease_;
};

inline std::string Shape::str() const {
  std::string s = "[";
  for (int i = 0; i < rank; ++i) {
    if (i) s += "x";
    s += std::to_string(dims[static_cast<std::size_t>(i)]);
  }
  return s + "]";
}

}  // namespace pgf
