#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/network.hpp"

namespace combnet {

// Binary checkpoint: the 5-byte magic "COMB1", then per tensor
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[]
// all little-endian, until end of file.
inline constexpr std::array<char, 5> kCheckpointMagic{'C', 'O', 'M', 'B', '1'};

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <class U>
bool get_le(std::istream& is, U& v) {
  std::array<unsigned char, sizeof(U)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return true;
}

}  // namespace detail

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  for (const auto& t : tensors) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint64_t>(os, d);
    for (double v : t.values) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IngestionError("checkpoint write failed");
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  std::array<char, 5> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw IngestionError("not a COMB1 checkpoint");
  }
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    NamedTensor t;
    std::uint32_t len = 0, rank = 0;
    if (!detail::get_le(is, len)) throw IngestionError("checkpoint truncated in name length");
    t.name.resize(len);
    if (!is.read(t.name.data(), len)) throw IngestionError("checkpoint truncated in name");
    if (!detail::get_le(is, rank)) throw IngestionError("checkpoint truncated in rank of " + t.name);
    std::uint64_t count = 1;
    t.dims.resize(rank);
    for (auto& d : t.dims) {
      if (!detail::get_le(is, d)) throw IngestionError("checkpoint truncated in dims of " + t.name);
      count *= d;
    }
    t.values.resize(count);
    for (auto& v : t.values) {
      std::uint64_t bits = 0;
      if (!detail::get_le(is, bits)) throw IngestionError("checkpoint truncated in values of " + t.name);
      v = std::bit_cast<double>(bits);
    }
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {
inline std::vector<std::uint64_t> dims_of(const Shape4& s) { return {s.n, s.c, s.h, s.w}; }
}  // namespace detail

/// Parameters followed by BN running statistics, each as a rank-4 tensor.
inline void save_checkpoint(Network& net, std::ostream& os) {
  std::vector<NamedTensor> ts;
  for (const auto& p : net.params()) ts.push_back({p.name, detail::dims_of(p.shape), {p.value.begin(), p.value.end()}});
  for (const auto& p : net.buffers()) ts.push_back({p.name, detail::dims_of(p.shape), {p.value.begin(), p.value.end()}});
  write_checkpoint(os, ts);
}

/// Restores every parameter and buffer of `net` by name; shapes must match.
inline void load_checkpoint(Network& net, std::istream& is) {
  std::map<std::string, NamedTensor> by_name;
  for (auto& t : read_checkpoint(is)) by_name.emplace(t.name, std::move(t));
  auto restore = [&](const ParamRef& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IngestionError("checkpoint lacks tensor " + p.name);
    if (it->second.dims != detail::dims_of(p.shape)) {
      throw IngestionError("checkpoint tensor " + p.name + " has mismatched dims");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p.value.begin());
  };
  for (const auto& p : net.params()) restore(p);
  for (const auto& p : net.buffers()) restore(p);
}

}  // namespace combnet
