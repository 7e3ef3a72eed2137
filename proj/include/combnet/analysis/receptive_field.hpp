#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/ops/conv.hpp"

namespace combnet {

/// An output unit: channel and spatial position at the output of `layer`.
struct UnitPos {
  std::size_t layer = 0;
  std::size_t channel = 0;
  std::size_t p = 0;
  std::size_t q = 0;
};

struct BoundingBox {
  std::size_t row_min = 0, row_max = 0, col_min = 0, col_max = 0;
  std::size_t height() const { return row_max - row_min + 1; }
  std::size_t width() const { return col_max - col_min + 1; }
};

struct ReceptiveField {
  UnitPos out_pos;
  std::set<std::pair<std::size_t, std::size_t>> input_coords;  // (row, col) at the network input

  BoundingBox bounding_box() const {
    if (input_coords.empty()) throw GeometryError("empty receptive field has no bounding box");
    BoundingBox b{input_coords.begin()->first, input_coords.begin()->first,
                  input_coords.begin()->second, input_coords.begin()->second};
    for (const auto& [r, c] : input_coords) {
      b.row_min = std::min(b.row_min, r);
      b.row_max = std::max(b.row_max, r);
      b.col_min = std::min(b.col_min, c);
      b.col_max = std::max(b.col_max, c);
    }
    return b;
  }
};

/// Exact input-dependency set of one unit in a stack of conv layers.
///
/// Walks the stack backwards: a convolution site depends on its in-bounds
/// K x K stencil over the group's channels, a uniform site on its single
/// source coordinate over the group's channels.
inline ReceptiveField receptive_field(std::span<const CombConvLayer> net, Shape3 input,
                                      UnitPos pos) {
  if (net.empty()) throw GeometryError("receptive field of an empty network");
  if (pos.layer >= net.size()) {
    throw GeometryError("layer " + std::to_string(pos.layer) + " outside a " +
                        std::to_string(net.size()) + "-layer network");
  }
  std::vector<Shape3> shapes{input};
  for (std::size_t l = 0; l <= pos.layer; ++l) {
    if (net[l].in_channels() != shapes.back().c) {
      throw ShapeError("layer " + std::to_string(l) + " expects " +
                       std::to_string(net[l].in_channels()) + " channels, got " +
                       std::to_string(shapes.back().c));
    }
    shapes.push_back(net[l].output_shape(shapes.back()));
  }
  const Shape3 top = shapes.back();
  if (pos.channel >= top.c || pos.p >= top.h || pos.q >= top.w) {
    throw GeometryError("unit (" + std::to_string(pos.channel) + "," + std::to_string(pos.p) +
                        "," + std::to_string(pos.q) + ") outside layer output");
  }

  const auto index = [](const Shape3& s, std::size_t c, std::size_t r, std::size_t q) {
    return (c * s.h + r) * s.w + q;
  };
  std::vector<std::uint8_t> live(top.c * top.h * top.w, 0);
  live[index(top, pos.channel, pos.p, pos.q)] = 1;

  for (std::size_t l = pos.layer + 1; l-- > 0;) {
    const CombConvLayer& layer = net[l];
    const Shape3 in = shapes[l];
    const Shape3 out = shapes[l + 1];
    const auto& g = layer.geometry();
    const std::size_t k = layer.kernel_size();
    const std::size_t cin_g = layer.weights().in_channels_per_group();
    const std::size_t cout_g = layer.out_channels() / g.groups;
    std::vector<std::uint8_t> below(in.c * in.h * in.w, 0);
    for (std::size_t j = 0; j < out.c; ++j)
      for (std::size_t p = 0; p < out.h; ++p)
        for (std::size_t q = 0; q < out.w; ++q) {
          if (!live[index(out, j, p, q)]) continue;
          const std::size_t c0 = (j / cout_g) * cin_g;
          if (!layer.is_conv_site(p, q, j)) {
            const std::size_t r = uniform_source_index(p, layer.mask_config(), in.h);
            const std::size_t s = uniform_source_index(q, layer.mask_config(), in.w);
            for (std::size_t c = 0; c < cin_g; ++c) below[index(in, c0 + c, r, s)] = 1;
            continue;
          }
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long long r = static_cast<long long>(p * g.stride + u) - static_cast<long long>(g.pad);
              const long long s = static_cast<long long>(q * g.stride + v) - static_cast<long long>(g.pad);
              if (r < 0 || s < 0 || r >= static_cast<long long>(in.h) || s >= static_cast<long long>(in.w)) continue;
              for (std::size_t c = 0; c < cin_g; ++c)
                below[index(in, c0 + c, static_cast<std::size_t>(r), static_cast<std::size_t>(s))] = 1;
            }
        }
    live = std::move(below);
  }

  ReceptiveField rf{pos, {}};
  for (std::size_t c = 0; c < input.c; ++c)
    for (std::size_t r = 0; r < input.h; ++r)
      for (std::size_t q = 0; q < input.w; ++q)
        if (live[index(input, c, r, q)]) rf.input_coords.emplace(r, q);
  return rf;
}

}  // namespace combnet
