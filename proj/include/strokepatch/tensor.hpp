#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "strokepatch/common.hpp"

namespace strokepatch {

/// Dense row-major tensor. Images are channels-first {c, h, w}; convolution
/// weights are {c_out, c_in, kh, kw}; per-channel parameters are {c}.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)),
        data_(numel_of(shape_), fill) {}

  Tensor(std::initializer_list<std::size_t> shape, T fill = T(0))
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor image(std::size_t channels, std::size_t height, std::size_t width, T fill = T(0)) {
    return Tensor({channels, height, width}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Image-view accessors, valid for rank-3 tensors.
  std::size_t channels() const { return shape_[0]; }
  std::size_t height() const { return shape_[1]; }
  std::size_t width() const { return shape_[2]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Raw pointer to the start of image row (c, y).
  T* row(std::size_t c, std::size_t y) { return data_.data() + (c * shape_[1] + y) * shape_[2]; }
  const T* row(std::size_t c, std::size_t y) const {
    return data_.data() + (c * shape_[1] + y) * shape_[2];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ")";
    return os.str();
  }

private:
  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

/// Floating-point image buffer, channels-first, values in [0,1].
using Image = Tensor<float>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ValueError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace strokepatch
