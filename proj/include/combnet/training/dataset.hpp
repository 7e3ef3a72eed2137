#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

enum class Split { train, test };

struct Dataset {
  Tensor4 images;  // (N, C, H, W)
  std::vector<int> labels;
  Split split = Split::train;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
};

inline constexpr std::size_t kCifarImageBytes = 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarImageBytes;

/// Reads one CIFAR-10 binary batch: 3073-byte records of a label byte followed
/// by R, G and B planes of 1024 bytes. Pixels are scaled to [0, 1].
/// `max_records` = 0 reads the whole file.
inline Dataset read_cifar_batch(const std::filesystem::path& path, std::size_t max_records = 0) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IngestionError("cannot open CIFAR-10 batch " + path.string());
  const auto file_size = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  if (file_size % kCifarRecordBytes != 0) {
    const std::size_t offset = file_size / kCifarRecordBytes * kCifarRecordBytes;
    throw IngestionError(path.string() + ": truncated record at byte offset " +
                         std::to_string(offset) + " (file ends at " + std::to_string(file_size) + ")");
  }
  std::size_t records = file_size / kCifarRecordBytes;
  if (max_records != 0) records = std::min(records, max_records);

  Dataset d;
  d.images = Tensor4(Shape4{records, 3, 32, 32});
  d.labels.resize(records);
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (std::size_t i = 0; i < records; ++i) {
    if (!f.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()))) {
      throw IngestionError(path.string() + ": short read at byte offset " +
                           std::to_string(i * kCifarRecordBytes));
    }
    if (rec[0] > 9) {
      throw LabelError(path.string() + ": label " + std::to_string(rec[0]) +
                       " outside [0,10) at byte offset " + std::to_string(i * kCifarRecordBytes));
    }
    d.labels[i] = rec[0];
    double* img = d.images.data().data() + i * kCifarImageBytes;
    for (std::size_t b = 0; b < kCifarImageBytes; ++b) img[b] = rec[1 + b] / 255.0;
  }
  return d;
}

inline Dataset concat(std::vector<Dataset> parts) {
  Dataset out;
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  if (parts.empty()) return out;
  const Shape4 s = parts.front().images.shape();
  out.images = Tensor4(Shape4{n, s.c, s.h, s.w});
  out.split = parts.front().split;
  out.num_classes = parts.front().num_classes;
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.images.data().begin(), p.images.data().end(), out.images.data().begin() + at);
    at += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-channel population mean/std over a dataset's images.
inline ChannelStats channel_stats(const Dataset& d) {
  const Shape4 s = d.images.shape();
  ChannelStats st{std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  const double count = static_cast<double>(s.n * s.h * s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.h * s.w; ++i) sum += d.images[d.images.offset(n, c, 0, 0) + i];
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.h * s.w; ++i) {
        const double v = d.images[d.images.offset(n, c, 0, 0) + i] - mean;
        sq += v * v;
      }
    st.mean[c] = mean;
    st.std[c] = std::sqrt(sq / count);
  }
  return st;
}

inline void standardize(Dataset& d, const ChannelStats& st) {
  const Shape4 s = d.images.shape();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const double inv = st.std[c] > 0.0 ? 1.0 / st.std[c] : 1.0;
      for (std::size_t i = 0; i < s.h * s.w; ++i) {
        double& v = d.images[d.images.offset(n, c, 0, 0) + i];
        v = (v - st.mean[c]) * inv;
      }
    }
}

/// Loads data_batch_1..5.bin and test_batch.bin from `dir`, keeping the first
/// `train_limit` / `test_limit` records (0 = all), and standardizes both splits
/// with the train split's per-channel statistics.
inline std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir,
                                                std::size_t train_limit = 0,
                                                std::size_t test_limit = 0) {
  std::vector<Dataset> parts;
  std::size_t have = 0;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit != 0 && have >= train_limit) break;
    const std::size_t want = train_limit == 0 ? 0 : train_limit - have;
    parts.push_back(read_cifar_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), want));
    have += parts.back().size();
  }
  Dataset train = concat(std::move(parts));
  train.split = Split::train;
  Dataset test = read_cifar_batch(dir / "test_batch.bin", test_limit);
  test.split = Split::test;
  const ChannelStats st = channel_stats(train);
  standardize(train, st);
  standardize(test, st);
  return {std::move(train), std::move(test)};
}

/// Class-conditional synthetic images: a fixed random template per class plus
/// Gaussian noise. Used where no dataset is available.
inline Dataset make_synthetic_dataset(std::size_t n, int num_classes, Shape3 shape,
                                      std::uint64_t seed, double noise = 0.5,
                                      Split split = Split::train) {
  std::mt19937_64 template_rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> templates(static_cast<std::size_t>(num_classes) * shape.c * shape.h * shape.w);
  for (auto& v : templates) v = unit(template_rng);

  std::mt19937_64 rng(seed ^ (split == Split::train ? 0x9e3779b97f4a7c15ULL : 0xc2b2ae3d27d4eb4fULL));
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  Dataset d;
  d.split = split;
  d.num_classes = num_classes;
  d.images = Tensor4(Shape4{n, shape.c, shape.h, shape.w});
  d.labels.resize(n);
  const std::size_t per = shape.c * shape.h * shape.w;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = pick(rng);
    d.labels[i] = label;
    const double* t = templates.data() + static_cast<std::size_t>(label) * per;
    for (std::size_t k = 0; k < per; ++k) d.images[i * per + k] = t[k] + noise * unit(rng);
  }
  return d;
}

}  // namespace combnet
