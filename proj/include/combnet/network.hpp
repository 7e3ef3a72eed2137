#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "combnet/analysis/flops.hpp"
#include "combnet/error.hpp"
#include "combnet/masking.hpp"
#include "combnet/ops/batchnorm.hpp"
#include "combnet/ops/conv.hpp"
#include "combnet/ops/layers.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

enum class Arch { comb_stack, vgg };

struct NetworkConfig {
  Arch arch = Arch::comb_stack;
  int depth = 8;
  int width = 32;  // comb_stack only
  ConvMode mode = ConvMode::comb;
  bool interleave = true;
  BnStrategy bn = BnStrategy::pre_bn;
  UniformNorm norm = UniformNorm::by_c_out;
  int num_classes = 10;
  Shape3 input{3, 32, 32};
  int vgg_fc_width = 4096;  // hidden width of the VGG classifier

  void validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input.c == 0 || input.h == 0 || input.w == 0) throw ConfigError("input shape must be non-empty");
    if (arch == Arch::comb_stack) {
      if (depth != 8 && depth != 16) throw ConfigError("comb_stack depth must be 8 or 16, got " + std::to_string(depth));
      if (width != 32 && width != 48 && width != 64 && width != 96) {
        throw ConfigError("comb_stack width must be 32, 48, 64 or 96, got " + std::to_string(width));
      }
    } else {
      if (depth != 11 && depth != 13 && depth != 16 && depth != 19) {
        throw ConfigError("vgg depth must be 11, 13, 16 or 19, got " + std::to_string(depth));
      }
      if (vgg_fc_width < 1) throw ConfigError("vgg_fc_width must be >= 1");
    }
  }
};

/// conv -> ReLU -> BN, with the comb conv's BN strategy deciding whether the
/// ReLU/BN pair covers only the convolution sites (pre_bn) or every site
/// after the branches are combined (post_bn).
struct ConvBlock {
  std::string name;
  CombConvLayer conv;
  BNState bn;

  // forward caches
  Tensor4 in;
  Tensor4 pre_act;
  Tensor4 site_mask;  // non-empty only when ReLU/BN cover convolution sites alone
  BNCache bn_cache;

  bool has_bn() const { return conv.bn_strategy() != BnStrategy::none; }
  bool conv_sites_only() const {
    return conv.mode() == ConvMode::comb && conv.bn_strategy() == BnStrategy::pre_bn;
  }
};

struct MaxPoolLayer {
  std::string name;
  Shape4 in_shape;
  std::vector<std::size_t> argmax;
};

struct GlobalAvgPoolLayer {
  std::string name;
  Shape4 in_shape;
};

struct DenseLayer {
  std::string name;
  Tensor4 w;  // (out, in, 1, 1)
  Tensor4 b;  // (out, 1, 1, 1)
  bool relu = false;
  Tensor4 in;
  Tensor4 pre_act;
};

using Layer = std::variant<ConvBlock, MaxPoolLayer, GlobalAvgPoolLayer, DenseLayer>;

/// Named view of a parameter or buffer buffer in declaration order.
struct ParamRef {
  std::string name;
  Shape4 shape;
  std::span<double> value;
  bool decay = false;  // weight decay applies (conv / linear weights)
};

class Network {
 public:
  NetworkConfig config;
  std::vector<Layer> layers;

  /// Trainable parameters in declaration order.
  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto& layer : layers) {
      if (auto* c = std::get_if<ConvBlock>(&layer)) {
        auto& w = c->conv.weights().tensor();
        out.push_back({c->name + ".weight", w.shape(), w.data(), true});
        if (c->has_bn()) {
          const std::size_t ch = c->bn.channels();
          out.push_back({c->name + ".bn.gamma", Shape4{ch, 1, 1, 1}, c->bn.gamma, false});
          out.push_back({c->name + ".bn.beta", Shape4{ch, 1, 1, 1}, c->bn.beta, false});
        }
      } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
        out.push_back({d->name + ".weight", d->w.shape(), d->w.data(), true});
        out.push_back({d->name + ".bias", d->b.shape(), d->b.data(), false});
      }
    }
    return out;
  }

  /// Non-trainable state (BN running statistics).
  std::vector<ParamRef> buffers() {
    std::vector<ParamRef> out;
    for (auto& layer : layers) {
      if (auto* c = std::get_if<ConvBlock>(&layer); c && c->has_bn()) {
        const std::size_t ch = c->bn.channels();
        out.push_back({c->name + ".bn.running_mean", Shape4{ch, 1, 1, 1}, c->bn.running_mean, false});
        out.push_back({c->name + ".bn.running_var", Shape4{ch, 1, 1, 1}, c->bn.running_var, false});
      }
    }
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value.size();
    return n;
  }

  std::vector<const CombConvLayer*> conv_layers() const {
    std::vector<const CombConvLayer*> out;
    for (const auto& layer : layers)
      if (const auto* c = std::get_if<ConvBlock>(&layer)) out.push_back(&c->conv);
    return out;
  }
};

enum class WeightInit { he, zeros };

struct ParamSpec {
  std::string name;
  Shape4 shape;
};

namespace detail {

class NetworkBuilder {
 public:
  NetworkBuilder(const NetworkConfig& cfg, std::uint64_t seed, WeightInit init)
      : cfg_(cfg), rng_(seed), init_(init), channels_(cfg.input.c) {
    net_.config = cfg;
  }

  void conv(std::size_t out_channels) {
    const std::size_t k = 3;
    Kernel4 w(out_channels, channels_, k);
    if (init_ == WeightInit::he) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(k * k * channels_)));
      for (auto& v : w.tensor().data()) v = dist(rng_);
    }
    const int phase = static_cast<int>(conv_index_ % 2);
    CombConvLayer layer(std::move(w), ConvGeometry{1, 1, 1}, cfg_.mode, phase, cfg_.interleave,
                        cfg_.norm, cfg_.bn);
    net_.layers.emplace_back(ConvBlock{"conv" + std::to_string(conv_index_), std::move(layer),
                                       BNState(out_channels), {}, {}, {}, {}});
    ++conv_index_;
    channels_ = out_channels;
  }

  void maxpool() {
    net_.layers.emplace_back(MaxPoolLayer{"pool" + std::to_string(pool_index_++), {}, {}});
  }

  void global_pool() { net_.layers.emplace_back(GlobalAvgPoolLayer{"gap", {}}); }

  void dense(std::size_t out, bool relu) {
    const std::size_t in = channels_;
    DenseLayer d{"fc" + std::to_string(fc_index_++), Tensor4(Shape4{out, in, 1, 1}),
                 Tensor4(Shape4{out, 1, 1, 1}), relu, {}, {}};
    if (init_ == WeightInit::he) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : d.w.data()) v = dist(rng_);
      for (auto& v : d.b.data()) v = dist(rng_);
    }
    net_.layers.emplace_back(std::move(d));
    channels_ = out;
  }

  Network finish() { return std::move(net_); }

 private:
  NetworkConfig cfg_;
  std::mt19937_64 rng_;
  WeightInit init_;
  std::size_t channels_;
  std::size_t conv_index_ = 0;
  std::size_t pool_index_ = 0;
  std::size_t fc_index_ = 0;
  Network net_;
};

}  // namespace detail

namespace detail {

template <class B>
void lay_out_comb_stack(const NetworkConfig& c, B& b) {
  const int every = c.depth / 4;
  for (int i = 1; i <= c.depth; ++i) {
    b.conv(static_cast<std::size_t>(c.width));
    if (i % every == 0 && i < c.depth) b.maxpool();
  }
  b.global_pool();
  b.dense(static_cast<std::size_t>(c.num_classes), false);
}

}  // namespace detail

/// VGG configuration: conv widths, 0 marks a 2x2 max-pool.
inline std::vector<int> vgg_layout(int depth) {
  switch (depth) {
    case 11: return {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    case 13: return {64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    case 16: return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    case 19:
      return {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0,
              512, 512, 512, 512, 0};
    default: throw ConfigError("vgg depth must be 11, 13, 16 or 19, got " + std::to_string(depth));
  }
}

namespace detail {

template <class B>
void lay_out_vgg(const NetworkConfig& c, B& b) {
  for (int w : vgg_layout(c.depth)) {
    if (w == 0) {
      b.maxpool();
    } else {
      b.conv(static_cast<std::size_t>(w));
    }
  }
  b.global_pool();
  b.dense(static_cast<std::size_t>(c.vgg_fc_width), true);
  b.dense(static_cast<std::size_t>(c.vgg_fc_width), true);
  b.dense(static_cast<std::size_t>(c.num_classes), false);
}

// Records the parameter shapes a NetworkBuilder would allocate.
class SpecRecorder {
 public:
  explicit SpecRecorder(const NetworkConfig& cfg) : cfg_(cfg), channels_(cfg.input.c) {}

  void conv(std::size_t out_channels) {
    const std::string name = "conv" + std::to_string(conv_index_++);
    specs_.push_back({name + ".weight", Shape4{out_channels, channels_, 3, 3}});
    if (cfg_.bn != BnStrategy::none) {
      specs_.push_back({name + ".bn.gamma", Shape4{out_channels, 1, 1, 1}});
      specs_.push_back({name + ".bn.beta", Shape4{out_channels, 1, 1, 1}});
    }
    channels_ = out_channels;
  }
  void maxpool() {}
  void global_pool() {}
  void dense(std::size_t out, bool) {
    const std::string name = "fc" + std::to_string(fc_index_++);
    specs_.push_back({name + ".weight", Shape4{out, channels_, 1, 1}});
    specs_.push_back({name + ".bias", Shape4{out, 1, 1, 1}});
    channels_ = out;
  }

  std::vector<ParamSpec> finish() { return std::move(specs_); }

 private:
  NetworkConfig cfg_;
  std::size_t channels_;
  std::size_t conv_index_ = 0;
  std::size_t fc_index_ = 0;
  std::vector<ParamSpec> specs_;
};

}  // namespace detail

/// Plain stack of `depth` 3x3 conv blocks at constant width, 2x2 max-pool after
/// every depth/4 blocks (three pools), global average pool and a linear head.
inline Network build_comb_stack(const NetworkConfig& cfg, std::uint64_t seed = 0,
                                WeightInit init = WeightInit::he) {
  NetworkConfig c = cfg;
  c.arch = Arch::comb_stack;
  c.validate();
  detail::NetworkBuilder b(c, seed, init);
  detail::lay_out_comb_stack(c, b);
  return b.finish();
}

/// VGG-A/B/D/E feature extractor with a BN after every conv, then global
/// average pooling and the three-layer classifier (fc_width, fc_width, classes).
inline Network build_vgg(const NetworkConfig& cfg, std::uint64_t seed = 0,
                         WeightInit init = WeightInit::he) {
  NetworkConfig c = cfg;
  c.arch = Arch::vgg;
  c.validate();
  detail::NetworkBuilder b(c, seed, init);
  detail::lay_out_vgg(c, b);
  return b.finish();
}

/// Names and shapes of the trainable parameters `build_network(cfg)` would
/// allocate, in the same order as Network::params(), without allocating them.
inline std::vector<ParamSpec> param_specs(const NetworkConfig& cfg) {
  cfg.validate();
  detail::SpecRecorder r(cfg);
  if (cfg.arch == Arch::vgg) {
    detail::lay_out_vgg(cfg, r);
  } else {
    detail::lay_out_comb_stack(cfg, r);
  }
  return r.finish();
}

inline std::size_t param_count(const NetworkConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : param_specs(cfg)) n += p.shape.size();
  return n;
}

inline Network build_network(const NetworkConfig& cfg, std::uint64_t seed = 0,
                             WeightInit init = WeightInit::he) {
  return cfg.arch == Arch::vgg ? build_vgg(cfg, seed, init) : build_comb_stack(cfg, seed, init);
}

namespace detail {

template <class F>
decltype(auto) in_layer(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError("layer " + name + ": " + e.what());
  } catch (const GeometryError& e) {
    throw GeometryError("layer " + name + ": " + e.what());
  }
}

inline Tensor4 forward_block(ConvBlock& b, const Tensor4& x, bool training) {
  b.in = x;
  b.pre_act = comb_conv_forward(x, b.conv);
  const Shape4 ys = b.pre_act.shape();
  Tensor4 act(ys);
  if (b.conv_sites_only()) {
    b.site_mask = make_mask(ys.h, ys.w, ys.c, b.conv.mask_config());
    for (std::size_t n = 0; n < ys.n; ++n)
      for (std::size_t c = 0; c < ys.c; ++c)
        for (std::size_t i = 0; i < ys.h * ys.w; ++i) {
          const std::size_t o = b.pre_act.offset(n, c, 0, 0) + i;
          const double v = b.pre_act[o];
          act[o] = b.site_mask[c * ys.h * ys.w + i] != 0.0 && v <= 0.0 ? 0.0 : v;
        }
  } else {
    b.site_mask = Tensor4();
    act = relu(b.pre_act);
  }
  if (!b.has_bn()) return act;
  return batchnorm_forward(act, b.bn, training, &b.bn_cache, b.site_mask);
}

struct BlockGrads {
  Tensor4 grad_x;
  Kernel4 grad_w;
  std::vector<double> grad_gamma, grad_beta;
};

inline BlockGrads backward_block(const ConvBlock& b, Tensor4 grad) {
  BlockGrads out;
  if (b.has_bn()) {
    auto g = batchnorm_backward(b.bn_cache, b.bn, grad);
    grad = std::move(g.grad_x);
    out.grad_gamma = std::move(g.grad_gamma);
    out.grad_beta = std::move(g.grad_beta);
  }
  const Shape4 ys = b.pre_act.shape();
  for (std::size_t n = 0; n < ys.n; ++n)
    for (std::size_t c = 0; c < ys.c; ++c)
      for (std::size_t i = 0; i < ys.h * ys.w; ++i) {
        const std::size_t o = b.pre_act.offset(n, c, 0, 0) + i;
        const bool gated = b.site_mask.empty() || b.site_mask[c * ys.h * ys.w + i] != 0.0;
        if (gated && b.pre_act[o] <= 0.0) grad[o] = 0.0;
      }
  auto cg = comb_conv_backward(b.in, b.conv, grad);
  out.grad_x = std::move(cg.grad_x);
  out.grad_w = std::move(cg.grad_w);
  return out;
}

}  // namespace detail

/// Runs every layer in order and returns logits of shape (N, classes, 1, 1).
/// Caches activations for net_backward.
inline Tensor4 net_forward(Network& net, const Tensor4& x, bool training) {
  const Shape3 in = net.config.input;
  if (x.shape().c != in.c || x.shape().h != in.h || x.shape().w != in.w) {
    throw ShapeError("network input " + x.shape().str() + " does not match configured (" +
                     std::to_string(in.c) + "," + std::to_string(in.h) + "," +
                     std::to_string(in.w) + ")");
  }
  Tensor4 h = x;
  for (auto& layer : net.layers) {
    h = std::visit(
        [&](auto& l) -> Tensor4 {
          using T = std::decay_t<decltype(l)>;
          return detail::in_layer(l.name, [&]() -> Tensor4 {
            if constexpr (std::is_same_v<T, ConvBlock>) {
              return detail::forward_block(l, h, training);
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
              l.in_shape = h.shape();
              auto r = maxpool2x2(h);
              l.argmax = std::move(r.argmax);
              return std::move(r.y);
            } else if constexpr (std::is_same_v<T, GlobalAvgPoolLayer>) {
              l.in_shape = h.shape();
              return avgpool_global(h);
            } else {
              l.in = h;
              l.pre_act = linear(h, l.w, l.b);
              return l.relu ? relu(l.pre_act) : l.pre_act;
            }
          });
        },
        layer);
  }
  return h;
}

/// Backpropagates d(loss)/d(logits) through the cached forward pass.
/// Returns one gradient tensor per entry of net.params(), same order.
inline std::vector<Tensor4> net_backward(Network& net, const Tensor4& grad_logits) {
  std::vector<std::vector<Tensor4>> per_layer(net.layers.size());
  Tensor4 g = grad_logits;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    auto& layer = net.layers[i];
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          detail::in_layer(l.name, [&] {
            if constexpr (std::is_same_v<T, ConvBlock>) {
              auto bg = detail::backward_block(l, std::move(g));
              g = std::move(bg.grad_x);
              per_layer[i].push_back(std::move(bg.grad_w.tensor()));
              if (l.has_bn()) {
                const std::size_t ch = l.bn.channels();
                per_layer[i].emplace_back(Shape4{ch, 1, 1, 1}, std::move(bg.grad_gamma));
                per_layer[i].emplace_back(Shape4{ch, 1, 1, 1}, std::move(bg.grad_beta));
              }
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
              g = maxpool2x2_backward(l.in_shape, l.argmax, g);
            } else if constexpr (std::is_same_v<T, GlobalAvgPoolLayer>) {
              g = avgpool_global_backward(l.in_shape, g);
            } else {
              if (l.relu) g = relu_backward(l.pre_act, g);
              auto lg = linear_backward(l.in, l.w, g);
              g = std::move(lg.grad_x);
              per_layer[i].push_back(std::move(lg.grad_w));
              per_layer[i].push_back(std::move(lg.grad_b));
            }
          });
        },
        layer);
  }
  std::vector<Tensor4> grads;
  for (auto& v : per_layer)
    for (auto& t : v) grads.push_back(std::move(t));
  return grads;
}

/// MAC accounting for every conv and linear layer of `net`. Linear layers are
/// dense in both columns.
inline FlopReport flop_report(const Network& net) {
  FlopReport r;
  Shape3 s = net.config.input;
  for (const auto& layer : net.layers) {
    if (const auto* c = std::get_if<ConvBlock>(&layer)) {
      r.per_layer.push_back({c->name, count_macs(c->conv, s)});
      s = c->conv.output_shape(s);
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      s = {s.c, s.h / 2, s.w / 2};
    } else if (std::holds_alternative<GlobalAvgPoolLayer>(layer)) {
      s = {s.c, 1, 1};
    } else {
      const auto& d = std::get<DenseLayer>(layer);
      const std::uint64_t m = count_linear_macs(s.c * s.h * s.w, d.w.shape().n);
      r.per_layer.push_back({d.name, MacCount{m, m, 0}});
      s = {d.w.shape().n, 1, 1};
    }
  }
  return r;
}

}  // namespace combnet
