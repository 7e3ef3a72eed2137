#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "combnet/error.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

/// Spatial extent of a convolution output along one axis.
/// Throws GeometryError when the window does not fit at least once.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t pad) {
  if (stride == 0) throw GeometryError("stride must be >= 1");
  if (in + 2 * pad < kernel) {
    throw GeometryError("kernel " + std::to_string(kernel) + " does not fit input extent " +
                        std::to_string(in) + " with pad " + std::to_string(pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Checkerboard mask parameters for one comb layer.
///
/// A location (p, q) of output channel j takes the convolution branch when
/// p + q + layer_phase (+ j when interleaving) is even, the uniform branch
/// otherwise.
class MaskConfig {
 public:
  explicit MaskConfig(std::size_t kernel = 3, std::size_t stride = 1, std::size_t pad = 0,
                      int layer_phase = 0, bool interleave = false)
      : kernel_(kernel), stride_(stride), pad_(pad), layer_phase_(layer_phase),
        interleave_(interleave) {
    if (kernel_ == 0 || kernel_ % 2 == 0) {
      throw ConfigError("comb masks need an odd kernel size, got " + std::to_string(kernel_));
    }
    if (stride_ == 0) throw ConfigError("stride must be >= 1");
    if (layer_phase_ != 0 && layer_phase_ != 1) {
      throw ConfigError("layer_phase must be 0 or 1, got " + std::to_string(layer_phase_));
    }
  }

  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }
  std::size_t pad() const { return pad_; }
  int layer_phase() const { return layer_phase_; }
  bool interleave() const { return interleave_; }

  MaskConfig with_phase(int phase) const {
    return MaskConfig(kernel_, stride_, pad_, phase, interleave_);
  }
  MaskConfig with_interleave(bool on) const {
    return MaskConfig(kernel_, stride_, pad_, layer_phase_, on);
  }

  friend bool operator==(const MaskConfig&, const MaskConfig&) = default;

 private:
  std::size_t kernel_;
  std::size_t stride_;
  std::size_t pad_;
  int layer_phase_;
  bool interleave_;
};

inline std::uint8_t mask_value(std::size_t p, std::size_t q, std::size_t j,
                               const MaskConfig& cfg) {
  const std::size_t parity =
      p + q + (cfg.interleave() ? j : 0) + static_cast<std::size_t>(cfg.layer_phase());
  return parity % 2 == 0 ? 1 : 0;
}

/// Materialized {0,1} mask of shape (1, C_out, H, W).
inline Tensor4 make_mask(std::size_t h, std::size_t w, std::size_t c_out, const MaskConfig& cfg) {
  Tensor4 m(Shape4{1, c_out, h, w});
  for (std::size_t j = 0; j < c_out; ++j)
    for (std::size_t p = 0; p < h; ++p)
      for (std::size_t q = 0; q < w; ++q) m[m.offset(0, j, p, q)] = mask_value(p, q, j, cfg);
  return m;
}

/// Receptive-field centre of output index `o` along one axis, clamped into
/// [0, extent).
inline std::size_t uniform_source_index(std::size_t o, const MaskConfig& cfg,
                                        std::size_t extent) {
  const auto c = static_cast<long long>(o * cfg.stride() + cfg.kernel() / 2) -
                 static_cast<long long>(cfg.pad());
  return static_cast<std::size_t>(std::clamp(c, 0LL, static_cast<long long>(extent) - 1));
}

/// Input coordinate feeding the uniform branch at output (p, q).
inline std::pair<std::size_t, std::size_t> uniform_source_coord(std::size_t p, std::size_t q,
                                                                const MaskConfig& cfg,
                                                                std::size_t h_in,
                                                                std::size_t w_in) {
  const std::size_t ho = conv_output_extent(h_in, cfg.kernel(), cfg.stride(), cfg.pad());
  const std::size_t wo = conv_output_extent(w_in, cfg.kernel(), cfg.stride(), cfg.pad());
  if (p >= ho || q >= wo) {
    throw GeometryError("output coordinate (" + std::to_string(p) + "," + std::to_string(q) +
                        ") outside " + std::to_string(ho) + "x" + std::to_string(wo) +
                        " output");
  }
  return {uniform_source_index(p, cfg, h_in), uniform_source_index(q, cfg, w_in)};
}

}  // namespace combnet
