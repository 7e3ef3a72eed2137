#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "combnet/error.hpp"

namespace combnet {

/// Extents of a rank-4 array in (batch, channels, height, width) order.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t operator[](std::size_t axis) const {
    return std::array{n, c, h, w}[axis];
  }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
  }
};

/// Extents of one sample, (channels, height, width).
struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

/// Dense double-precision rank-4 tensor, row-major in (N, C, H, W).
///
/// `at`/`set` are bounds-checked. Kernels that need raw speed walk the flat
/// buffer returned by `data()` and compute offsets with `offset()`.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(Shape4 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor buffer holds " + std::to_string(data_.size()) +
                       " values but shape " + shape_.str() + " needs " +
                       std::to_string(shape_.size()));
    }
  }

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  constexpr std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    check_index(n, c, h, w);
    return data_[offset(n, c, h, w)];
  }

  void set(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double v) {
    check_index(n, c, h, w);
    data_[offset(n, c, h, w)] = v;
  }

  double& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  double operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  void check_index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    static constexpr const char* kAxis[] = {"batch", "channel", "height", "width"};
    const std::array<std::size_t, 4> idx{n, c, h, w};
    for (std::size_t a = 0; a < 4; ++a) {
      if (idx[a] >= shape_[a]) {
        throw IndexError(std::string("index out of bounds on ") + kAxis[a] + " axis: " +
                         std::to_string(idx[a]) + " >= " + std::to_string(shape_[a]));
      }
    }
  }

  Shape4 shape_{};
  std::vector<double> data_;
};

/// Convolution kernel bank: (out_channels, in_channels_per_group, K, K).
class Kernel4 {
 public:
  Kernel4() = default;
  Kernel4(std::size_t out_channels, std::size_t in_channels_per_group, std::size_t k,
          double fill = 0.0)
      : t_(Shape4{out_channels, in_channels_per_group, k, k}, fill) {}
  explicit Kernel4(Tensor4 t) : t_(std::move(t)) {
    if (t_.shape().h != t_.shape().w) {
      throw ShapeError("kernel must be square, got " + t_.shape().str());
    }
  }

  std::size_t out_channels() const { return t_.shape().n; }
  std::size_t in_channels_per_group() const { return t_.shape().c; }
  std::size_t size() const { return t_.shape().h; }

  const Shape4& shape() const { return t_.shape(); }
  Tensor4& tensor() { return t_; }
  const Tensor4& tensor() const { return t_; }

  double at(std::size_t j, std::size_t c, std::size_t u, std::size_t v) const {
    return t_.at(j, c, u, v);
  }
  void set(std::size_t j, std::size_t c, std::size_t u, std::size_t v, double value) {
    t_.set(j, c, u, v, value);
  }

  friend bool operator==(const Kernel4&, const Kernel4&) = default;

 private:
  Tensor4 t_;
};

inline Tensor4 tensor_new(Shape4 shape, double fill) { return Tensor4(shape, fill); }

/// Zero-pads the two spatial axes by `pad` on every side.
inline Tensor4 pad2d(const Tensor4& t, std::size_t pad) {
  const Shape4 s = t.shape();
  Tensor4 out(Shape4{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          out[out.offset(n, c, h + pad, w + pad)] = t[t.offset(n, c, h, w)];
  return out;
}

/// Inverse of pad2d: drops `pad` rows/cols from every spatial border.
inline Tensor4 crop2d(const Tensor4& t, std::size_t pad) {
  const Shape4 s = t.shape();
  if (s.h < 2 * pad || s.w < 2 * pad) {
    throw ShapeError("cannot crop " + std::to_string(pad) + " from " + s.str());
  }
  Tensor4 out(Shape4{s.n, s.c, s.h - 2 * pad, s.w - 2 * pad});
  const Shape4 o = out.shape();
  for (std::size_t n = 0; n < o.n; ++n)
    for (std::size_t c = 0; c < o.c; ++c)
      for (std::size_t h = 0; h < o.h; ++h)
        for (std::size_t w = 0; w < o.w; ++w)
          out[out.offset(n, c, h, w)] = t[t.offset(n, c, h + pad, w + pad)];
  return out;
}

enum class BinaryOp { add, sub, mul };

inline Tensor4 ew_binary(const Tensor4& a, const Tensor4& b, BinaryOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case BinaryOp::add: out[i] = a[i] + b[i]; break;
      case BinaryOp::sub: out[i] = a[i] - b[i]; break;
      case BinaryOp::mul: out[i] = a[i] * b[i]; break;
    }
  }
  return out;
}

}  // namespace combnet
