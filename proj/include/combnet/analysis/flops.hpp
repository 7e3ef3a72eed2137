#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "combnet/ops/conv.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

/// Multiply-accumulate counts for one layer.
struct MacCount {
  std::uint64_t macs_standard = 0;
  std::uint64_t macs_comb = 0;
  std::uint64_t connections_removed = 0;

  /// Measured fraction of work removed, 1 - comb/standard.
  double reduction() const {
    return macs_standard == 0
               ? 0.0
               : 1.0 - static_cast<double>(macs_comb) / static_cast<double>(macs_standard);
  }
};

/// Closed-form reduction for a K x K comb layer with c_out output channels:
/// 1/2 - 1/(K^2 * c_out).
inline double reduction_ratio(std::size_t k, std::size_t c_out) {
  return 0.5 - 1.0 / static_cast<double>(k * k * c_out);
}

/// Exact MAC count for a conv layer on an input of shape `in`.
///
/// Convolution sites cost K*K*C_in_g each. The uniform map is computed once
/// per output location per group and costs C_in_g, shared by every output
/// channel of the group; it is the "+1" term of the closed form. Mask
/// multiplications are not counted since the fast path never forms them.
inline MacCount count_macs(const CombConvLayer& layer, Shape3 in) {
  const Shape3 out = layer.output_shape(in);
  const std::uint64_t k2 = layer.kernel_size() * layer.kernel_size();
  const std::uint64_t cin_g = layer.weights().in_channels_per_group();
  const std::uint64_t sites = static_cast<std::uint64_t>(out.h) * out.w;
  MacCount m;
  m.macs_standard = sites * k2 * cin_g * out.c;
  if (layer.mode() == ConvMode::standard) {
    m.macs_comb = m.macs_standard;
    return m;
  }
  std::uint64_t conv_sites = 0;
  for (std::size_t j = 0; j < out.c; ++j)
    for (std::size_t p = 0; p < out.h; ++p)
      for (std::size_t q = 0; q < out.w; ++q) conv_sites += layer.is_conv_site(p, q, j) ? 1 : 0;
  const std::uint64_t uniform_sites = sites * out.c - conv_sites;
  m.macs_comb = conv_sites * k2 * cin_g + sites * cin_g * layer.geometry().groups;
  m.connections_removed = uniform_sites * (k2 - 1) * cin_g;
  return m;
}

inline std::uint64_t count_linear_macs(std::size_t in_features, std::size_t out_features) {
  return static_cast<std::uint64_t>(in_features) * out_features;
}

struct LayerMacs {
  std::string name;
  MacCount macs;
};

/// Per-layer and total MAC accounting for a network.
struct FlopReport {
  std::vector<LayerMacs> per_layer;

  MacCount total() const {
    MacCount t;
    for (const auto& l : per_layer) {
      t.macs_standard += l.macs.macs_standard;
      t.macs_comb += l.macs.macs_comb;
      t.connections_removed += l.macs.connections_removed;
    }
    return t;
  }

  /// CSV with header layer,macs_standard,macs_comb,removed,ratio and a final
  /// "total" row. `scale` = 2 counts multiply and add separately.
  void write_csv(std::ostream& os, std::uint64_t scale = 1) const {
    os << "layer,macs_standard,macs_comb,removed,ratio\n";
    auto row = [&](const std::string& name, const MacCount& m) {
      char ratio[32];
      std::snprintf(ratio, sizeof ratio, "%.6f", m.reduction());
      os << name << ',' << m.macs_standard * scale << ',' << m.macs_comb * scale << ','
         << m.connections_removed << ',' << ratio << '\n';
    };
    for (const auto& l : per_layer) row(l.name, l.macs);
    row("total", total());
  }
};

}  // namespace combnet
