#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/network.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 100;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> lr_drops{0.5, 0.75};  // fractions of training
  std::uint64_t seed = 1;
  bool augment = true;
  std::size_t train_limit = 4000;  // 0 = whole split
  std::size_t test_limit = 1000;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    for (double d : lr_drops)
      if (d <= 0.0 || d >= 1.0) throw ConfigError("lr drop points must be fractions in (0,1)");
  }
};

/// Step schedule: lr0, divided by 10 at every drop point already reached.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.lr0;
  for (double d : cfg.lr_drops)
    if (static_cast<double>(epoch) >= d * static_cast<double>(cfg.epochs)) lr /= 10.0;
  return lr;
}

/// Momentum SGD with L2 decay on weights flagged `decay`:
///   v <- momentum * v + (g + wd * p);  p <- p - lr * v
/// `velocity` is sized on first use.
inline void sgd_step(std::span<const ParamRef> params, std::span<const Tensor4> grads,
                     std::vector<std::vector<double>>& velocity, double lr,
                     const TrainConfig& cfg, const std::string& context = {}) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (velocity.empty()) {
    velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].value.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (grads[i].size() != p.value.size() || velocity[i].size() != p.value.size()) {
      throw ShapeError("sgd_step: gradient for " + p.name + " has wrong size");
    }
    for (double g : grads[i].data())
      if (!std::isfinite(g)) {
        throw DivergenceError((context.empty() ? "" : context + ": ") + "non-finite gradient in " + p.name);
      }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto g = grads[i].data();
    const double wd = p.decay ? cfg.weight_decay : 0.0;
    auto& v = velocity[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      v[k] = cfg.momentum * v[k] + (g[k] + wd * p.value[k]);
      p.value[k] -= lr * v[k];
    }
  }
}

}  // namespace combnet
