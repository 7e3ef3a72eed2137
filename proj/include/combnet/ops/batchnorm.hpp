#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

/// Per-channel batch-norm parameters and running statistics.
struct BNState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;  // weight of the current batch in the running update

  BNState() = default;
  explicit BNState(std::size_t channels, double eps_ = 1e-5, double momentum_ = 0.1)
      : gamma(channels, 1.0), beta(channels, 0.0), running_mean(channels, 0.0),
        running_var(channels, 1.0), eps(eps_), momentum(momentum_) {
    if (eps <= 0.0) throw ConfigError("batch-norm eps must be > 0");
    if (momentum <= 0.0 || momentum >= 1.0) throw ConfigError("batch-norm momentum must be in (0,1)");
  }

  std::size_t channels() const { return gamma.size(); }
};

/// Everything batchnorm_backward needs from the forward pass.
struct BNCache {
  Tensor4 x_hat;
  std::vector<double> inv_std;
  std::vector<std::size_t> count;  // normalized sites per channel
  Tensor4 site_mask;               // (1,C,H,W) of {0,1}; empty = every site
  bool training = false;
};

namespace detail {
inline bool bn_site(const Tensor4& mask, std::size_t c, std::size_t h, std::size_t w) {
  return mask.empty() || mask[mask.offset(0, c, h, w)] != 0.0;
}
}  // namespace detail

/// Batch normalization over (N, H, W) per channel.
///
/// With a non-empty `site_mask` (shape (1,C,H,W)) only sites where the mask is
/// 1 contribute to the statistics and are normalized; the rest pass through
/// unchanged. Training mode updates the running statistics in `s`.
inline Tensor4 batchnorm_forward(const Tensor4& x, BNState& s, bool training, BNCache* cache = nullptr,
                                 const Tensor4& site_mask = Tensor4()) {
  const Shape4 xs = x.shape();
  if (xs.c != s.channels()) {
    throw ShapeError("batch-norm expects " + std::to_string(s.channels()) + " channels, got " +
                     xs.str());
  }
  if (!site_mask.empty() && site_mask.shape() != Shape4{1, xs.c, xs.h, xs.w}) {
    throw ShapeError("batch-norm site mask " + site_mask.shape().str() + " does not match " +
                     xs.str());
  }
  if (training && xs.n == 0) throw StatisticsError("batch-norm statistics over an empty batch");

  Tensor4 y = x;
  BNCache local;
  BNCache& cc = cache ? *cache : local;
  cc.x_hat = Tensor4(xs);
  cc.inv_std.assign(xs.c, 0.0);
  cc.count.assign(xs.c, 0);
  cc.site_mask = site_mask;
  cc.training = training;

  for (std::size_t c = 0; c < xs.c; ++c) {
    double mean = s.running_mean[c];
    double var = s.running_var[c];
    std::size_t m = 0;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t h = 0; h < xs.h; ++h)
          for (std::size_t w = 0; w < xs.w; ++w)
            if (detail::bn_site(site_mask, c, h, w)) {
              sum += x[x.offset(n, c, h, w)];
              ++m;
            }
      if (m == 0) continue;  // channel has no normalized sites in this geometry
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t h = 0; h < xs.h; ++h)
          for (std::size_t w = 0; w < xs.w; ++w)
            if (detail::bn_site(site_mask, c, h, w)) {
              const double d = x[x.offset(n, c, h, w)] - mean;
              sq += d * d;
            }
      var = sq / static_cast<double>(m);
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      s.running_mean[c] = (1.0 - s.momentum) * s.running_mean[c] + s.momentum * mean;
      s.running_var[c] = (1.0 - s.momentum) * s.running_var[c] + s.momentum * unbiased;
    }
    const double inv_std = 1.0 / std::sqrt(var + s.eps);
    cc.inv_std[c] = inv_std;
    std::size_t normalized = 0;
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t h = 0; h < xs.h; ++h)
        for (std::size_t w = 0; w < xs.w; ++w)
          if (detail::bn_site(site_mask, c, h, w)) {
            const std::size_t i = x.offset(n, c, h, w);
            const double xh = (x[i] - mean) * inv_std;
            cc.x_hat[i] = xh;
            y[i] = s.gamma[c] * xh + s.beta[c];
            ++normalized;
          }
    cc.count[c] = normalized;
  }
  return y;
}

struct BNGrads {
  Tensor4 grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};

inline BNGrads batchnorm_backward(const BNCache& cache, const BNState& s, const Tensor4& grad_y) {
  const Shape4 xs = cache.x_hat.shape();
  if (grad_y.shape() != xs) {
    throw ShapeError("batch-norm grad shape " + grad_y.shape().str() + " != " + xs.str());
  }
  BNGrads g{grad_y, std::vector<double>(xs.c, 0.0), std::vector<double>(xs.c, 0.0)};
  const Tensor4& mask = cache.site_mask;
  for (std::size_t c = 0; c < xs.c; ++c) {
    const std::size_t m = cache.count[c];
    if (m == 0) continue;
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t h = 0; h < xs.h; ++h)
        for (std::size_t w = 0; w < xs.w; ++w)
          if (detail::bn_site(mask, c, h, w)) {
            const std::size_t i = grad_y.offset(n, c, h, w);
            sum_dy += grad_y[i];
            sum_dy_xh += grad_y[i] * cache.x_hat[i];
          }
    g.grad_beta[c] = sum_dy;
    g.grad_gamma[c] = sum_dy_xh;
    const double scale = s.gamma[c] * cache.inv_std[c];
    const double md = static_cast<double>(m);
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t h = 0; h < xs.h; ++h)
        for (std::size_t w = 0; w < xs.w; ++w)
          if (detail::bn_site(mask, c, h, w)) {
            const std::size_t i = grad_y.offset(n, c, h, w);
            g.grad_x[i] = cache.training
                              ? scale * (grad_y[i] - sum_dy / md - cache.x_hat[i] * sum_dy_xh / md)
                              : scale * grad_y[i];
          }
  }
  return g;
}

}  // namespace combnet
