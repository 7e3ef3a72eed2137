#pragma once

#include <cstddef>
#include <random>

#include "combnet/tensor.hpp"

namespace combnet {

using Rng = std::mt19937_64;

/// Crop at offset (dy, dx) of the image zero-padded by `pad`, optionally
/// mirrored left-right. `img` is a single sample (1, C, H, W).
inline Tensor4 augment_with(const Tensor4& img, std::size_t dy, std::size_t dx, bool flip,
                            std::size_t pad = 4) {
  const Shape4 s = img.shape();
  Tensor4 out(s);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h; ++y) {
      const long long sy = static_cast<long long>(y + dy) - static_cast<long long>(pad);
      if (sy < 0 || sy >= static_cast<long long>(s.h)) continue;
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::size_t ox = flip ? s.w - 1 - x : x;
        const long long sx = static_cast<long long>(x + dx) - static_cast<long long>(pad);
        if (sx < 0 || sx >= static_cast<long long>(s.w)) continue;
        out[out.offset(0, c, y, ox)] =
            img[img.offset(0, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx))];
      }
    }
  return out;
}

/// Pad 4, uniform random crop back to the original size, mirror with p = 0.5.
inline Tensor4 augment(const Tensor4& img, Rng& rng, std::size_t pad = 4) {
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  const std::size_t dy = offset(rng);
  const std::size_t dx = offset(rng);
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  return augment_with(img, dy, dx, flip, pad);
}

}  // namespace combnet
