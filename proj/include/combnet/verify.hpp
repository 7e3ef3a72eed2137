#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "combnet/analysis/flops.hpp"
#include "combnet/analysis/grad_check.hpp"
#include "combnet/analysis/receptive_field.hpp"
#include "combnet/analysis/sparse.hpp"
#include "combnet/masking.hpp"
#include "combnet/ops/batchnorm.hpp"
#include "combnet/ops/conv.hpp"
#include "combnet/ops/layers.hpp"
#include "combnet/training/augment.hpp"

namespace combnet {

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::string detail;  // first counterexample when failed
};

namespace verify {

inline Tensor4 random_tensor(Shape4 s, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor4 t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// A random small comb layer and a matching input, as used by the
/// equivalence and lowering checks.
struct Instance {
  CombConvLayer layer;
  Tensor4 x;
};

inline Instance random_instance(Rng& rng, std::size_t batch = 1) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  static constexpr std::size_t kernels[] = {1, 3, 5};
  for (;;) {
    const std::size_t k = kernels[pick(0, 2)];
    const std::size_t stride = pick(1, 2);
    const std::size_t pad = pick(0, 1) ? k / 2 : 0;
    const std::size_t h = pick(1, 8), w = pick(1, 8);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const std::size_t cin = pick(1, 4), cout = pick(1, 4);
    std::size_t groups = 1;
    if (cin % 2 == 0 && cout % 2 == 0 && pick(0, 3) == 0) groups = 2;
    Kernel4 kern(random_tensor(Shape4{cout, cin / groups, k, k}, rng));
    CombConvLayer layer(std::move(kern), ConvGeometry{stride, pad, groups}, ConvMode::comb,
                        static_cast<int>(pick(0, 1)), pick(0, 1) == 1,
                        pick(0, 1) ? UniformNorm::by_c_out : UniformNorm::by_c_in);
    return {std::move(layer), random_tensor(Shape4{batch, cin, h, w}, rng)};
  }
}

inline std::string describe(const CombConvLayer& l, const Shape4& xs) {
  std::ostringstream os;
  os << "x=" << xs.str() << " K=" << l.kernel_size() << " Cout=" << l.out_channels()
     << " stride=" << l.geometry().stride << " pad=" << l.geometry().pad
     << " groups=" << l.geometry().groups << " phase=" << l.mask_config().layer_phase()
     << " interleave=" << l.mask_config().interleave();
  return os.str();
}

inline PropertyResult mask_law(std::size_t extent = 64, std::size_t channels = 8) {
  PropertyResult r{"mask law", true, {}};
  for (int phase = 0; phase < 2; ++phase)
    for (int inter = 0; inter < 2; ++inter) {
      const MaskConfig cfg(3, 1, 1, phase, inter == 1);
      for (std::size_t j = 0; j < channels; ++j)
        for (std::size_t p = 0; p < extent; ++p)
          for (std::size_t q = 0; q < extent; ++q) {
            const std::size_t par = (p + q + (inter ? j : 0) + static_cast<std::size_t>(phase)) % 2;
            const auto m = mask_value(p, q, j, cfg);
            const bool ok = m == (par == 0 ? 1 : 0) &&
                            (q + 1 >= extent || mask_value(p, q + 1, j, cfg) != m) &&
                            (p + 1 >= extent || mask_value(p + 1, q, j, cfg) != m) &&
                            mask_value(p, q, j, cfg.with_phase(1 - phase)) == 1 - m;
            if (!ok) {
              std::ostringstream os;
              os << "p=" << p << " q=" << q << " j=" << j << " phase=" << phase
                 << " interleave=" << inter;
              return {r.name, false, os.str()};
            }
          }
    }
  return r;
}

/// Fast path against mask * conv + (1 - mask) * uniform, bitwise.
inline PropertyResult comb_dense_equivalence(std::uint64_t seed, int instances = 200) {
  PropertyResult r{"comb forward equals dense formula", true, {}};
  Rng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const Instance inst = random_instance(rng, 2);
    const Tensor4 fast = comb_conv_forward(inst.x, inst.layer);
    const Tensor4 dense = comb_conv_forward_dense(inst.x, inst.layer);
    if (!(fast == dense)) return {r.name, false, describe(inst.layer, inst.x.shape())};
  }
  return r;
}

namespace detail {
inline PropertyResult grad_result(const std::string& name, const std::vector<double>& worst,
                                  double tol, const std::string& where) {
  for (double e : worst)
    if (!(e <= tol)) return {name, false, where + " max relative error " + std::to_string(e)};
  return {name, true, {}};
}
}  // namespace detail

inline PropertyResult grad_comb_conv(std::uint64_t seed, int instances = 20, double tol = 1e-5) {
  const std::string name = "comb conv gradient";
  Rng rng(seed);
  for (int i = 0; i < instances; ++i) {
    Instance inst = random_instance(rng, 2);
    const Shape4 xs = inst.x.shape();
    const Shape3 ys = inst.layer.output_shape({xs.c, xs.h, xs.w});
    const Tensor4 g = random_tensor(Shape4{xs.n, ys.c, ys.h, ys.w}, rng);
    const ConvGrads an = comb_conv_backward(inst.x, inst.layer, g);
    auto obj = [&] { return dot(comb_conv_forward(inst.x, inst.layer), g); };
    const auto rx = grad_check(obj, inst.x.data(), an.grad_x.data());
    const auto rw = grad_check(obj, inst.layer.weights().tensor().data(), an.grad_w.tensor().data());
    auto res = detail::grad_result(name, {rx.max_rel_error, rw.max_rel_error}, tol,
                                   describe(inst.layer, inst.x.shape()));
    if (!res.passed) return res;
  }
  return {name, true, {}};
}

inline PropertyResult grad_batchnorm(std::uint64_t seed, int instances = 20, double tol = 1e-5) {
  const std::string name = "batch-norm gradient";
  Rng rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int i = 0; i < instances; ++i) {
    const Shape4 s{pick(2, 3), pick(1, 3), pick(2, 4), pick(2, 4)};
    Tensor4 x = random_tensor(s, rng, 2.0);
    BNState st(s.c);
    for (auto& v : st.gamma) v = std::normal_distribution<double>(1.0, 0.3)(rng);
    for (auto& v : st.beta) v = std::normal_distribution<double>(0.0, 0.3)(rng);
    Tensor4 mask;
    if (i % 2 == 1) mask = make_mask(s.h, s.w, s.c, MaskConfig(3, 1, 1, static_cast<int>(i / 2 % 2), true));
    const Tensor4 g = random_tensor(s, rng);
    BNCache cache;
    BNState fwd = st;
    batchnorm_forward(x, fwd, true, &cache, mask);
    const BNGrads an = batchnorm_backward(cache, st, g);
    auto obj = [&] {
      BNState tmp = st;
      return dot(batchnorm_forward(x, tmp, true, nullptr, mask), g);
    };
    const auto rx = grad_check(obj, x.data(), an.grad_x.data());
    const auto rg = grad_check(obj, st.gamma, an.grad_gamma);
    const auto rb = grad_check(obj, st.beta, an.grad_beta);
    auto res = detail::grad_result(name, {rx.max_rel_error, rg.max_rel_error, rb.max_rel_error},
                                   tol, "x=" + s.str() + (mask.empty() ? "" : " masked"));
    if (!res.passed) return res;
  }
  return {name, true, {}};
}

inline PropertyResult grad_linear(std::uint64_t seed, int instances = 20, double tol = 1e-5) {
  const std::string name = "linear gradient";
  Rng rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int i = 0; i < instances; ++i) {
    const Shape4 s{pick(1, 3), pick(1, 3), pick(1, 3), pick(1, 3)};
    const std::size_t out = pick(1, 5);
    Tensor4 x = random_tensor(s, rng);
    Tensor4 w = random_tensor(Shape4{out, s.c * s.h * s.w, 1, 1}, rng);
    Tensor4 b = random_tensor(Shape4{out, 1, 1, 1}, rng);
    const Tensor4 g = random_tensor(Shape4{s.n, out, 1, 1}, rng);
    const LinearGrads an = linear_backward(x, w, g);
    auto obj = [&] { return dot(linear(x, w, b), g); };
    const auto rx = grad_check(obj, x.data(), an.grad_x.data());
    const auto rw = grad_check(obj, w.data(), an.grad_w.data());
    const auto rb = grad_check(obj, b.data(), an.grad_b.data());
    auto res = detail::grad_result(name, {rx.max_rel_error, rw.max_rel_error, rb.max_rel_error},
                                   tol, "x=" + s.str());
    if (!res.passed) return res;
  }
  return {name, true, {}};
}

inline PropertyResult grad_loss(std::uint64_t seed, int instances = 20, double tol = 1e-5) {
  const std::string name = "cross-entropy gradient";
  Rng rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = pick(1, 4), k = pick(2, 10);
    Tensor4 z = random_tensor(Shape4{n, k, 1, 1}, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(pick(0, k - 1));
    const LossResult an = softmax_cross_entropy(z, labels);
    auto obj = [&] { return softmax_cross_entropy(z, labels).loss; };
    const auto rz = grad_check(obj, z.data(), an.grad.data());
    auto res = detail::grad_result(name, {rz.max_rel_error}, tol, "logits=" + z.shape().str());
    if (!res.passed) return res;
  }
  return {name, true, {}};
}

/// spmv of the lowered matrix reproduces the fast path, sample by sample.
inline PropertyResult lowering_equivalence(std::uint64_t seed, int instances = 200) {
  PropertyResult r{"sparse lowering equals forward", true, {}};
  Rng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const Instance inst = random_instance(rng, 1);
    const Shape4 xs = inst.x.shape();
    const SparseMatrix m = lower_to_sparse(inst.layer, Shape3{xs.c, xs.h, xs.w});
    const auto y = m.spmv(inst.x.data());
    const Tensor4 ref = comb_conv_forward(inst.x, inst.layer);
    if (y.size() != ref.size() || !std::equal(y.begin(), y.end(), ref.data().begin())) {
      return {r.name, false, describe(inst.layer, xs)};
    }
  }
  return r;
}

/// Two phase-alternating 3x3 comb layers reach the same input set as two
/// standard layers from every interior convolution site.
inline PropertyResult receptive_field_claim(std::size_t extent = 12, std::size_t channels = 2) {
  PropertyResult r{"receptive field of stacked comb layers", true, {}};
  const Shape3 in{channels, extent, extent};
  auto stack = [&](ConvMode mode) {
    std::vector<CombConvLayer> net;
    for (int l = 0; l < 2; ++l)
      net.emplace_back(Kernel4(channels, channels, 3, 1.0), ConvGeometry{1, 1, 1}, mode, l, true);
    return net;
  };
  const auto comb = stack(ConvMode::comb);
  const auto standard = stack(ConvMode::standard);
  for (std::size_t j = 0; j < channels; ++j)
    for (std::size_t p = 2; p + 2 < extent; ++p)
      for (std::size_t q = 2; q + 2 < extent; ++q) {
        if (!comb[1].is_conv_site(p, q, j)) continue;
        const UnitPos u{1, j, p, q};
        const auto a = receptive_field(comb, in, u);
        const auto b = receptive_field(standard, in, u);
        if (a.input_coords != b.input_coords) {
          std::ostringstream os;
          os << "unit (" << j << "," << p << "," << q << "): " << a.input_coords.size() << " vs "
             << b.input_coords.size() << " input positions";
          return {r.name, false, os.str()};
        }
      }
  return r;
}

/// Measured comb/standard MAC ratio against 1 - (1/2 - 1/(K^2 C_out)).
inline PropertyResult flop_ratio() {
  PropertyResult r{"MAC reduction ratio", true, {}};
  for (std::size_t c : {32u, 64u, 96u})
    for (std::size_t n : {8u, 31u, 32u}) {
      CombConvLayer l(Kernel4(c, c, 3, 0.0), ConvGeometry{1, 1, 1}, ConvMode::comb, 0, true);
      const MacCount m = count_macs(l, Shape3{c, n, n});
      const double measured = static_cast<double>(m.macs_comb) / static_cast<double>(m.macs_standard);
      const double expect = 1.0 - reduction_ratio(3, c);
      const double tol = 1.0 / (static_cast<double>(n * n) * 9.0 * static_cast<double>(c * c));
      if (std::abs(measured - expect) > tol) {
        std::ostringstream os;
        os << "C_out=" << c << " N=" << n << ": " << measured << " vs " << expect;
        return {r.name, false, os.str()};
      }
    }
  return r;
}

}  // namespace verify

/// Every hermetic property; synthetic tensors only.
inline std::vector<PropertyResult> run_verify(std::uint64_t seed = 0) {
  std::vector<PropertyResult> out;
  out.push_back(verify::mask_law());
  out.push_back(verify::comb_dense_equivalence(seed));
  out.push_back(verify::grad_comb_conv(seed + 1));
  out.push_back(verify::grad_batchnorm(seed + 2));
  out.push_back(verify::grad_linear(seed + 3));
  out.push_back(verify::grad_loss(seed + 4));
  out.push_back(verify::lowering_equivalence(seed + 5));
  out.push_back(verify::receptive_field_claim());
  out.push_back(verify::flop_ratio());
  return out;
}

}  // namespace combnet
