#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "combnet/checkpoint.hpp"
#include "combnet/error.hpp"
#include "combnet/network.hpp"
#include "combnet/ops/layers.hpp"
#include "combnet/training/augment.hpp"
#include "combnet/training/dataset.hpp"
#include "combnet/training/sgd.hpp"

namespace combnet {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;

  /// epoch,train_loss,test_acc,lr,seconds
  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,test_acc,lr,seconds\n";
    os << std::setprecision(17);
    for (const auto& e : epochs) {
      os << e.epoch << ',' << e.train_loss << ',' << e.test_acc << ',' << e.lr << ','
         << e.seconds << '\n';
    }
  }
};

struct TrainOutputs {
  std::filesystem::path dir;  // empty: write nothing
  bool record_time = true;    // false writes 0 in the seconds column
  std::ostream* log = nullptr;
};

/// Copies samples `idx` of `d` into a batch tensor, augmenting when `rng` is set.
inline Tensor4 gather_batch(const Dataset& d, std::span<const std::size_t> idx, Rng* rng,
                            std::vector<int>& labels) {
  const Shape4 s = d.images.shape();
  const std::size_t per = s.c * s.h * s.w;
  Tensor4 batch(Shape4{idx.size(), s.c, s.h, s.w});
  labels.resize(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    labels[b] = d.labels[idx[b]];
    const auto src = d.images.data().subspan(idx[b] * per, per);
    if (rng) {
      Tensor4 img(Shape4{1, s.c, s.h, s.w}, std::vector<double>(src.begin(), src.end()));
      const Tensor4 aug = augment(img, *rng);
      std::copy(aug.data().begin(), aug.data().end(), batch.data().begin() + b * per);
    } else {
      std::copy(src.begin(), src.end(), batch.data().begin() + b * per);
    }
  }
  return batch;
}

/// Top-1 accuracy with BN in inference mode.
inline double evaluate(Network& net, const Dataset& d, std::size_t batch_size = 100) {
  if (d.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<int> labels;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < d.size(); start += batch_size) {
    const std::size_t end = std::min(d.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor4 logits = net_forward(net, gather_batch(d, idx, nullptr, labels), false);
    const std::size_t k = logits.shape().c;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double* z = logits.data().data() + b * k;
      const auto pred = static_cast<int>(std::max_element(z, z + k) - z);
      correct += pred == labels[b] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

namespace detail {
inline void save_checkpoint_file(Network& net, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot write checkpoint " + path.string());
  save_checkpoint(net, f);
}
}  // namespace detail

/// Mini-batch SGD over `train`, evaluating on `test` after every epoch.
///
/// One seeded generator drives shuffling and augmentation in a fixed order,
/// so equal (seed, config, data) reproduce the same history and weights.
/// With an output directory, writes history.csv after every epoch,
/// checkpoint_epoch<E>.bin when the learning rate drops and checkpoint.bin at
/// the end.
inline History train(Network& net, const Dataset& train_set, const Dataset& test_set,
                     const TrainConfig& cfg, const TrainOutputs& out = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> velocity;
  std::vector<int> labels;
  History history;
  const auto params = net.params();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg);
    if (epoch > 0 && lr < lr_at(epoch - 1, cfg) && !out.dir.empty()) {
      detail::save_checkpoint_file(net, out.dir / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"));
    }
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor4 x = gather_batch(train_set, idx, cfg.augment ? &rng : nullptr, labels);
      const Tensor4 logits = net_forward(net, x, true);
      const LossResult loss = softmax_cross_entropy(logits, labels);
      const std::string ctx = "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
      if (!std::isfinite(loss.loss)) throw DivergenceError(ctx + ": non-finite loss");
      const auto grads = net_backward(net, loss.grad);
      sgd_step(params, grads, velocity, lr, cfg, ctx);
      loss_sum += loss.loss * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.test_acc = evaluate(net, test_set);
    rec.lr = lr;
    rec.seconds = out.record_time
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      : 0.0;
    history.epochs.push_back(rec);
    if (out.log) {
      *out.log << "epoch " << epoch << " loss " << rec.train_loss << " test_acc " << rec.test_acc
               << " lr " << lr << '\n';
    }
    if (!out.dir.empty()) {
      std::ofstream csv(out.dir / "history.csv");
      history.write_csv(csv);
    }
  }
  if (!out.dir.empty()) detail::save_checkpoint_file(net, out.dir / "checkpoint.bin");
  return history;
}

}  // namespace combnet
