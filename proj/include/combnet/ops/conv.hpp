#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/masking.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

enum class ConvMode { comb, standard };
enum class BnStrategy { pre_bn, post_bn, none };

/// Divisor used by the uniform mapping: output channels (as printed in the
/// operator definition) or input channels (a true channel mean).
enum class UniformNorm { by_c_out, by_c_in };

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// One comb (or standard) convolution: weights, geometry and mask settings.
/// Bias-free.
class CombConvLayer {
 public:
  CombConvLayer(Kernel4 weights, ConvGeometry geometry, ConvMode mode = ConvMode::comb,
                int layer_phase = 0, bool interleave = false,
                UniformNorm norm = UniformNorm::by_c_out, BnStrategy bn = BnStrategy::none)
      : weights_(std::move(weights)), geometry_(geometry),
        mask_(weights_.size(), geometry.stride, geometry.pad, layer_phase, interleave),
        mode_(mode), norm_(norm), bn_(bn) {
    if (geometry_.groups == 0 || weights_.out_channels() % geometry_.groups != 0) {
      throw ConfigError("groups=" + std::to_string(geometry_.groups) +
                        " must divide out_channels=" + std::to_string(weights_.out_channels()));
    }
  }

  const Kernel4& weights() const { return weights_; }
  Kernel4& weights() { return weights_; }
  const ConvGeometry& geometry() const { return geometry_; }
  const MaskConfig& mask_config() const { return mask_; }
  ConvMode mode() const { return mode_; }
  UniformNorm norm() const { return norm_; }
  BnStrategy bn_strategy() const { return bn_; }

  std::size_t kernel_size() const { return weights_.size(); }
  std::size_t out_channels() const { return weights_.out_channels(); }
  std::size_t in_channels() const { return weights_.in_channels_per_group() * geometry_.groups; }

  Shape3 output_shape(Shape3 in) const {
    return {out_channels(),
            conv_output_extent(in.h, kernel_size(), geometry_.stride, geometry_.pad),
            conv_output_extent(in.w, kernel_size(), geometry_.stride, geometry_.pad)};
  }

  /// Whether output (p, q) of channel j runs the convolution branch.
  bool is_conv_site(std::size_t p, std::size_t q, std::size_t j) const {
    return mode_ == ConvMode::standard || mask_value(p, q, j, mask_) == 1;
  }

  /// Uniform divisor for one group.
  std::size_t uniform_divisor() const {
    return norm_ == UniformNorm::by_c_out ? out_channels() / geometry_.groups
                                          : weights_.in_channels_per_group();
  }

 private:
  Kernel4 weights_;
  ConvGeometry geometry_;
  MaskConfig mask_;
  ConvMode mode_;
  UniformNorm norm_;
  BnStrategy bn_;
};

namespace detail {

struct ConvPlan {
  Shape4 in;
  std::size_t k, stride, pad, groups;
  std::size_t cin_g, cout_g, c_out;
  std::size_t ho, wo;
};

inline ConvPlan make_plan(const Shape4& xs, const Kernel4& k, const ConvGeometry& g) {
  if (g.groups == 0) throw ShapeError("groups must be >= 1");
  if (xs.c != k.in_channels_per_group() * g.groups) {
    throw ShapeError("input has " + std::to_string(xs.c) + " channels but kernel " +
                     k.shape().str() + " with groups=" + std::to_string(g.groups) +
                     " expects " + std::to_string(k.in_channels_per_group() * g.groups));
  }
  if (k.out_channels() % g.groups != 0) {
    throw ShapeError("out_channels " + std::to_string(k.out_channels()) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  ConvPlan p{};
  p.in = xs;
  p.k = k.size();
  p.stride = g.stride;
  p.pad = g.pad;
  p.groups = g.groups;
  p.cin_g = k.in_channels_per_group();
  p.c_out = k.out_channels();
  p.cout_g = p.c_out / g.groups;
  p.ho = conv_output_extent(xs.h, p.k, g.stride, g.pad);
  p.wo = conv_output_extent(xs.w, p.k, g.stride, g.pad);
  return p;
}

// Kernel taps [lo, hi) whose input row/col lands inside [0, extent).
struct TapRange {
  std::size_t lo, hi;
};

inline TapRange tap_range(std::size_t o, const ConvPlan& P, std::size_t extent) {
  const long long base = static_cast<long long>(o * P.stride) - static_cast<long long>(P.pad);
  const long long lo = std::max(0LL, -base);
  const long long hi = std::min(static_cast<long long>(P.k), static_cast<long long>(extent) - base);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

// Single convolution response. Accumulation order (channel, row tap, col tap)
// is shared by every dense and sparse path so results agree bit-for-bit.
inline double conv_at(const double* x, const double* k, const ConvPlan& P, std::size_t n,
                      std::size_t j, std::size_t p, std::size_t q) {
  const std::size_t c0 = (j / P.cout_g) * P.cin_g;
  const TapRange ur = tap_range(p, P, P.in.h);
  const TapRange vr = tap_range(q, P, P.in.w);
  const std::size_t row0 = p * P.stride - P.pad;  // wraps; only used with u >= ur.lo
  const std::size_t col0 = q * P.stride - P.pad;
  double acc = 0.0;
  for (std::size_t c = 0; c < P.cin_g; ++c) {
    const double* xc = x + ((n * P.in.c + c0 + c) * P.in.h) * P.in.w;
    const double* kc = k + ((j * P.cin_g + c) * P.k) * P.k;
    for (std::size_t u = ur.lo; u < ur.hi; ++u) {
      const double* xr = xc + (row0 + u) * P.in.w + col0;
      const double* kr = kc + u * P.k;
      for (std::size_t v = vr.lo; v < vr.hi; ++v) acc += xr[v] * kr[v];
    }
  }
  return acc;
}

inline double uniform_at(const double* x, const Shape4& xs, std::size_t n, std::size_t c0,
                         std::size_t channels, std::size_t r, std::size_t col, double inv_d) {
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) acc += x[((n * xs.c + c0 + c) * xs.h + r) * xs.w + col] * inv_d;
  return acc;
}

inline std::vector<std::size_t> source_rows(const MaskConfig& m, std::size_t ho, std::size_t h_in) {
  std::vector<std::size_t> rows(ho);
  for (std::size_t p = 0; p < ho; ++p) rows[p] = uniform_source_index(p, m, h_in);
  return rows;
}

}  // namespace detail

/// Standard grouped convolution, no bias, zero padding.
inline Tensor4 conv2d_standard(const Tensor4& x, const Kernel4& k, const ConvGeometry& g) {
  const auto P = detail::make_plan(x.shape(), k, g);
  Tensor4 y(Shape4{P.in.n, P.c_out, P.ho, P.wo});
  const double* xd = x.data().data();
  const double* kd = k.tensor().data().data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < P.in.n; ++n)
    for (std::size_t j = 0; j < P.c_out; ++j)
      for (std::size_t p = 0; p < P.ho; ++p)
        for (std::size_t q = 0; q < P.wo; ++q) y[o++] = detail::conv_at(xd, kd, P, n, j, p, q);
  return y;
}

/// Channel-summed map scaled by 1/D, shape (N, 1, H, W). D is `c_out`
/// under by_c_out and the input channel count under by_c_in.
inline Tensor4 uniform_map(const Tensor4& x, std::size_t c_out, UniformNorm norm) {
  const Shape4 s = x.shape();
  if (s.size() == 0) throw ShapeError("uniform_map needs a non-empty input, got " + s.str());
  const std::size_t d = norm == UniformNorm::by_c_out ? c_out : s.c;
  if (d == 0) throw ConfigError("uniform mapping divisor is zero");
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor4 m(Shape4{s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w)
        m[m.offset(n, 0, h, w)] = detail::uniform_at(x.data().data(), s, n, 0, s.c, h, w, inv_d);
  return m;
}

/// Comb convolution, fast path. Convolution work runs only at mask=1 sites;
/// mask=0 sites copy the group's uniform map at their source coordinate.
inline Tensor4 comb_conv_forward(const Tensor4& x, const CombConvLayer& layer) {
  const auto P = detail::make_plan(x.shape(), layer.weights(), layer.geometry());
  if (layer.mode() == ConvMode::standard) return conv2d_standard(x, layer.weights(), layer.geometry());

  Tensor4 y(Shape4{P.in.n, P.c_out, P.ho, P.wo});
  const double* xd = x.data().data();
  const double* kd = layer.weights().tensor().data().data();
  const auto& mcfg = layer.mask_config();
  const auto rows = detail::source_rows(mcfg, P.ho, P.in.h);
  const auto cols = detail::source_rows(mcfg, P.wo, P.in.w);
  const double inv_d = 1.0 / static_cast<double>(layer.uniform_divisor());

  std::vector<double> um(P.ho * P.wo);
  for (std::size_t n = 0; n < P.in.n; ++n) {
    for (std::size_t g = 0; g < P.groups; ++g) {
      for (std::size_t p = 0; p < P.ho; ++p)
        for (std::size_t q = 0; q < P.wo; ++q)
          um[p * P.wo + q] =
              detail::uniform_at(xd, P.in, n, g * P.cin_g, P.cin_g, rows[p], cols[q], inv_d);
      for (std::size_t j = g * P.cout_g; j < (g + 1) * P.cout_g; ++j) {
        double* yj = y.data().data() + y.offset(n, j, 0, 0);
        for (std::size_t p = 0; p < P.ho; ++p)
          for (std::size_t q = 0; q < P.wo; ++q)
            yj[p * P.wo + q] = mask_value(p, q, j, mcfg) ? detail::conv_at(xd, kd, P, n, j, p, q)
                                                         : um[p * P.wo + q];
      }
    }
  }
  return y;
}

/// Reference comb forward built from whole-tensor pieces:
/// mask * conv2d_standard + (1 - mask) * uniform_map gathered at source coords.
inline Tensor4 comb_conv_forward_dense(const Tensor4& x, const CombConvLayer& layer) {
  Tensor4 conv = conv2d_standard(x, layer.weights(), layer.geometry());
  if (layer.mode() == ConvMode::standard) return conv;
  const Shape4 ys = conv.shape();
  const Shape4 xs = x.shape();
  const auto& mcfg = layer.mask_config();
  const std::size_t groups = layer.geometry().groups;
  const std::size_t cin_g = xs.c / groups;
  const std::size_t cout_g = ys.c / groups;

  Tensor4 mask(ys), uniform(ys);
  const Tensor4 m1 = make_mask(ys.h, ys.w, ys.c, mcfg);
  for (std::size_t g = 0; g < groups; ++g) {
    Tensor4 slice(Shape4{xs.n, cin_g, xs.h, xs.w});
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t c = 0; c < cin_g; ++c)
        for (std::size_t h = 0; h < xs.h; ++h)
          for (std::size_t w = 0; w < xs.w; ++w)
            slice[slice.offset(n, c, h, w)] = x[x.offset(n, g * cin_g + c, h, w)];
    const Tensor4 um = uniform_map(slice, cout_g, layer.norm());
    for (std::size_t n = 0; n < ys.n; ++n)
      for (std::size_t j = g * cout_g; j < (g + 1) * cout_g; ++j)
        for (std::size_t p = 0; p < ys.h; ++p)
          for (std::size_t q = 0; q < ys.w; ++q) {
            const auto [r, c] = uniform_source_coord(p, q, mcfg, xs.h, xs.w);
            uniform[uniform.offset(n, j, p, q)] = um[um.offset(n, 0, r, c)];
            mask[mask.offset(n, j, p, q)] = m1[m1.offset(0, j, p, q)];
          }
  }
  const Tensor4 ones(ys, 1.0);
  return ew_binary(ew_binary(mask, conv, BinaryOp::mul),
                   ew_binary(ew_binary(ones, mask, BinaryOp::sub), uniform, BinaryOp::mul),
                   BinaryOp::add);
}

struct ConvGrads {
  Tensor4 grad_x;
  Kernel4 grad_w;
};

/// Backward of comb_conv_forward. Weight gradients come only from mask=1
/// sites; each mask=0 site routes grad/D to every group input channel at its
/// source coordinate.
inline ConvGrads comb_conv_backward(const Tensor4& x, const CombConvLayer& layer,
                                    const Tensor4& grad_out) {
  const auto P = detail::make_plan(x.shape(), layer.weights(), layer.geometry());
  const Shape4 ys{P.in.n, P.c_out, P.ho, P.wo};
  if (grad_out.shape() != ys) {
    throw ShapeError("grad_out shape " + grad_out.shape().str() + " != forward output " +
                     ys.str());
  }
  ConvGrads g{Tensor4(P.in), Kernel4(P.c_out, P.cin_g, P.k)};
  const double* xd = x.data().data();
  const double* kd = layer.weights().tensor().data().data();
  double* gx = g.grad_x.data().data();
  double* gw = g.grad_w.tensor().data().data();
  const bool comb = layer.mode() == ConvMode::comb;
  const auto& mcfg = layer.mask_config();
  std::vector<std::size_t> rows, cols;
  if (comb) {
    rows = detail::source_rows(mcfg, P.ho, P.in.h);
    cols = detail::source_rows(mcfg, P.wo, P.in.w);
  }
  const double inv_d = 1.0 / static_cast<double>(layer.uniform_divisor());

  for (std::size_t n = 0; n < P.in.n; ++n) {
    for (std::size_t j = 0; j < P.c_out; ++j) {
      const std::size_t c0 = (j / P.cout_g) * P.cin_g;
      for (std::size_t p = 0; p < P.ho; ++p) {
        for (std::size_t q = 0; q < P.wo; ++q) {
          const double go = grad_out[grad_out.offset(n, j, p, q)];
          if (go == 0.0) continue;
          if (comb && !mask_value(p, q, j, mcfg)) {
            for (std::size_t c = 0; c < P.cin_g; ++c)
              gx[((n * P.in.c + c0 + c) * P.in.h + rows[p]) * P.in.w + cols[q]] += go * inv_d;
            continue;
          }
          const auto ur = detail::tap_range(p, P, P.in.h);
          const auto vr = detail::tap_range(q, P, P.in.w);
          const std::size_t row0 = p * P.stride - P.pad;
          const std::size_t col0 = q * P.stride - P.pad;
          for (std::size_t c = 0; c < P.cin_g; ++c) {
            const std::size_t xoff = ((n * P.in.c + c0 + c) * P.in.h) * P.in.w;
            const std::size_t koff = ((j * P.cin_g + c) * P.k) * P.k;
            for (std::size_t u = ur.lo; u < ur.hi; ++u) {
              const std::size_t xr = xoff + (row0 + u) * P.in.w + col0;
              const std::size_t kr = koff + u * P.k;
              for (std::size_t v = vr.lo; v < vr.hi; ++v) {
                gw[kr + v] += go * xd[xr + v];
                gx[xr + v] += go * kd[kr + v];
              }
            }
          }
        }
      }
    }
  }
  return g;
}

inline ConvGrads conv2d_standard_backward(const Tensor4& x, const Kernel4& k,
                                          const ConvGeometry& geometry, const Tensor4& grad_out) {
  return comb_conv_backward(x, CombConvLayer(k, geometry, ConvMode::standard), grad_out);
}

}  // namespace combnet
