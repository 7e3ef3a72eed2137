#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

inline Tensor4 relu(const Tensor4& x) {
  Tensor4 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

inline Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_y) {
  if (x.shape() != grad_y.shape()) {
    throw ShapeError("relu grad shape " + grad_y.shape().str() + " != " + x.shape().str());
  }
  Tensor4 g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
  return g;
}

// 2x2 max pooling, stride 2. Odd trailing rows/cols are dropped.
struct MaxPoolResult {
  Tensor4 y;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

inline MaxPoolResult maxpool2x2(const Tensor4& x) {
  const Shape4 s = x.shape();
  if (s.h < 2 || s.w < 2) throw GeometryError("maxpool2x2 needs at least 2x2 input, got " + s.str());
  MaxPoolResult r{Tensor4(Shape4{s.n, s.c, s.h / 2, s.w / 2}), {}};
  r.argmax.resize(r.y.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t p = 0; p < s.h / 2; ++p)
        for (std::size_t q = 0; q < s.w / 2; ++q, ++o) {
          std::size_t best = x.offset(n, c, 2 * p, 2 * q);
          for (std::size_t du = 0; du < 2; ++du)
            for (std::size_t dv = 0; dv < 2; ++dv) {
              const std::size_t i = x.offset(n, c, 2 * p + du, 2 * q + dv);
              if (x[i] > x[best]) best = i;
            }
          r.y[o] = x[best];
          r.argmax[o] = best;
        }
  return r;
}

inline Tensor4 maxpool2x2_backward(const Shape4& in_shape, std::span<const std::size_t> argmax,
                                   const Tensor4& grad_y) {
  if (argmax.size() != grad_y.size()) throw ShapeError("maxpool grad does not match forward");
  Tensor4 g(in_shape);
  for (std::size_t o = 0; o < grad_y.size(); ++o) g[argmax[o]] += grad_y[o];
  return g;
}

inline Tensor4 avgpool_global(const Tensor4& x) {
  const Shape4 s = x.shape();
  Tensor4 y(Shape4{s.n, s.c, 1, 1});
  const double inv = 1.0 / static_cast<double>(s.h * s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.h * s.w; ++i) acc += x[x.offset(n, c, 0, 0) + i];
      y[y.offset(n, c, 0, 0)] = acc * inv;
    }
  return y;
}

inline Tensor4 avgpool_global_backward(const Shape4& in_shape, const Tensor4& grad_y) {
  Tensor4 g(in_shape);
  const double inv = 1.0 / static_cast<double>(in_shape.h * in_shape.w);
  for (std::size_t n = 0; n < in_shape.n; ++n)
    for (std::size_t c = 0; c < in_shape.c; ++c) {
      const double v = grad_y[grad_y.offset(n, c, 0, 0)] * inv;
      for (std::size_t i = 0; i < in_shape.h * in_shape.w; ++i) g[g.offset(n, c, 0, 0) + i] = v;
    }
  return g;
}

/// Fully connected layer. `w` has shape (out, in, 1, 1) and `b` (out, 1, 1, 1);
/// `x` is flattened per sample to in = C*H*W features. Output is (N, out, 1, 1).
inline Tensor4 linear(const Tensor4& x, const Tensor4& w, const Tensor4& b) {
  const Shape4 s = x.shape();
  const std::size_t in = s.c * s.h * s.w;
  const std::size_t out = w.shape().n;
  if (w.shape() != Shape4{out, in, 1, 1} || b.shape() != Shape4{out, 1, 1, 1}) {
    throw ShapeError("linear weights " + w.shape().str() + "/" + b.shape().str() +
                     " do not fit input " + s.str());
  }
  Tensor4 y(Shape4{s.n, out, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* xn = x.data().data() + n * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w.data().data() + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xn[i];
      y[n * out + o] = acc;
    }
  }
  return y;
}

struct LinearGrads {
  Tensor4 grad_x;
  Tensor4 grad_w;
  Tensor4 grad_b;
};

inline LinearGrads linear_backward(const Tensor4& x, const Tensor4& w, const Tensor4& grad_y) {
  const Shape4 s = x.shape();
  const std::size_t in = s.c * s.h * s.w;
  const std::size_t out = w.shape().n;
  if (grad_y.shape() != Shape4{s.n, out, 1, 1}) {
    throw ShapeError("linear grad shape " + grad_y.shape().str() + " does not match output");
  }
  LinearGrads g{Tensor4(s), Tensor4(w.shape()), Tensor4(Shape4{out, 1, 1, 1})};
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* xn = x.data().data() + n * in;
    double* gxn = g.grad_x.data().data() + n * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double go = grad_y[n * out + o];
      if (go == 0.0) continue;
      const double* wo = w.data().data() + o * in;
      double* gwo = g.grad_w.data().data() + o * in;
      g.grad_b[o] += go;
      for (std::size_t i = 0; i < in; ++i) {
        gwo[i] += go * xn[i];
        gxn[i] += go * wo[i];
      }
    }
  }
  return g;
}

struct LossResult {
  double loss = 0.0;
  Tensor4 grad;  // d(mean loss)/d(logits)
};

/// Softmax cross-entropy averaged over the batch. Logits are (N, K, 1, 1).
inline LossResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const Shape4 s = logits.shape();
  const std::size_t k = s.c * s.h * s.w;
  if (labels.size() != s.n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(s.n));
  }
  LossResult r{0.0, Tensor4(s)};
  if (s.n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw LabelError("label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
    }
    const double* z = logits.data().data() + n * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += std::exp(z[i] - zmax);
    const double log_denom = std::log(denom);
    r.loss += (log_denom - (z[label] - zmax)) * inv_n;
    double* g = r.grad.data().data() + n * k;
    for (std::size_t i = 0; i < k; ++i) {
      g[i] = std::exp(z[i] - zmax - log_denom) * inv_n;
    }
    g[label] -= inv_n;
  }
  return r;
}

}  // namespace combnet
