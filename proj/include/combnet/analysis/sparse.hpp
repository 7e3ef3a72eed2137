#pragma once

#include <cstddef>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/ops/conv.hpp"

namespace combnet {

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Coordinate-list operator from a flattened (C,H,W) input to a flattened
/// (C_out,H_out,W_out) output. Entries are stored row by row.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Triplet> entries;

  std::size_t nnz() const { return entries.size(); }

  /// y = A x, accumulating each row's entries in storage order.
  std::vector<double> spmv(std::span<const double> x) const {
    if (x.size() != cols) {
      throw ShapeError("spmv input has " + std::to_string(x.size()) + " values, matrix has " +
                       std::to_string(cols) + " columns");
    }
    std::vector<double> y(rows, 0.0);
    for (const auto& e : entries) y[e.row] += e.value * x[e.col];
    return y;
  }

  std::vector<double> dense() const {
    std::vector<double> d(rows * cols, 0.0);
    for (const auto& e : entries) d[e.row * cols + e.col] = e.value;
    return d;
  }

  /// Header "rows cols nnz", then one "row col value" line per entry.
  void write(std::ostream& os) const {
    os << rows << ' ' << cols << ' ' << entries.size() << '\n';
    os << std::setprecision(17);
    for (const auto& e : entries) os << e.row << ' ' << e.col << ' ' << e.value << '\n';
  }

  static SparseMatrix read(std::istream& is) {
    SparseMatrix m;
    std::size_t nnz = 0;
    if (!(is >> m.rows >> m.cols >> nnz)) throw IngestionError("sparse matrix header unreadable");
    m.entries.resize(nnz);
    for (std::size_t i = 0; i < nnz; ++i) {
      auto& e = m.entries[i];
      if (!(is >> e.row >> e.col >> e.value)) {
        throw IngestionError("sparse matrix entry " + std::to_string(i) + " unreadable");
      }
      if (e.row >= m.rows || e.col >= m.cols) {
        throw IngestionError("sparse matrix entry " + std::to_string(i) + " out of range");
      }
    }
    return m;
  }
};

/// Lowers one conv layer acting on a single (C,H,W) sample to a sparse matrix.
/// Convolution rows carry the kernel stencil, uniform rows carry 1/D at the
/// source coordinate of every group input channel.
inline SparseMatrix lower_to_sparse(const CombConvLayer& layer, Shape3 in) {
  const Shape4 xs{1, in.c, in.h, in.w};
  const auto P = detail::make_plan(xs, layer.weights(), layer.geometry());
  const auto& mcfg = layer.mask_config();
  const auto& k = layer.weights();
  const double inv_d = 1.0 / static_cast<double>(layer.uniform_divisor());

  SparseMatrix m;
  m.rows = P.c_out * P.ho * P.wo;
  m.cols = in.c * in.h * in.w;
  const auto col_of = [&](std::size_t c, std::size_t r, std::size_t q) {
    return (c * in.h + r) * in.w + q;
  };
  for (std::size_t j = 0; j < P.c_out; ++j) {
    const std::size_t c0 = (j / P.cout_g) * P.cin_g;
    for (std::size_t p = 0; p < P.ho; ++p) {
      for (std::size_t q = 0; q < P.wo; ++q) {
        const std::size_t row = (j * P.ho + p) * P.wo + q;
        if (!layer.is_conv_site(p, q, j)) {
          const std::size_t r = uniform_source_index(p, mcfg, in.h);
          const std::size_t s = uniform_source_index(q, mcfg, in.w);
          for (std::size_t c = 0; c < P.cin_g; ++c) m.entries.push_back({row, col_of(c0 + c, r, s), inv_d});
          continue;
        }
        const auto ur = detail::tap_range(p, P, in.h);
        const auto vr = detail::tap_range(q, P, in.w);
        for (std::size_t c = 0; c < P.cin_g; ++c)
          for (std::size_t u = ur.lo; u < ur.hi; ++u)
            for (std::size_t v = vr.lo; v < vr.hi; ++v)
              m.entries.push_back({row, col_of(c0 + c, p * P.stride + u - P.pad, q * P.stride + v - P.pad),
                                   k.tensor()[k.tensor().offset(j, c, u, v)]});
      }
    }
  }
  return m;
}

}  // namespace combnet
