#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "combnet/error.hpp"
#include "combnet/network.hpp"
#include "combnet/training/sgd.hpp"

namespace combnet {

/// Network architecture plus training hyperparameters, as stored in a
/// `key = value` config file.
struct RunConfig {
  NetworkConfig net;
  TrainConfig train;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (v == n) return e;
  throw ConfigError("bad value '" + v + "' for " + key);
}

template <class E>
const char* enum_name(E e, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, x] : names)
    if (x == e) return n;
  return "?";
}

inline const std::initializer_list<std::pair<const char*, Arch>> kArchNames{
    {"comb_stack", Arch::comb_stack}, {"vgg", Arch::vgg}};
inline const std::initializer_list<std::pair<const char*, ConvMode>> kModeNames{
    {"comb", ConvMode::comb}, {"standard", ConvMode::standard}};
inline const std::initializer_list<std::pair<const char*, BnStrategy>> kBnNames{
    {"pre_bn", BnStrategy::pre_bn}, {"post_bn", BnStrategy::post_bn}, {"none", BnStrategy::none}};
inline const std::initializer_list<std::pair<const char*, UniformNorm>> kNormNames{
    {"by_c_out", UniformNorm::by_c_out}, {"by_c_in", UniformNorm::by_c_in}};

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "arch", "depth", "width", "mode", "interleave", "bn_strategy", "norm", "num_classes",
      "input_channels", "input_height", "input_width", "vgg_fc_width", "epochs", "batch_size",
      "lr0", "momentum", "weight_decay", "lr_drops", "seed", "augment", "train_limit",
      "test_limit"};
  return keys;
}

/// Sets one key. Unknown keys and malformed values raise ConfigError.
inline void set_config_value(RunConfig& rc, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& n = rc.net;
  auto& t = rc.train;
  const std::string v = trim(value);
  if (key == "arch") n.arch = parse_enum(key, v, kArchNames);
  else if (key == "depth") n.depth = parse_number<int>(key, v);
  else if (key == "width") n.width = parse_number<int>(key, v);
  else if (key == "mode") n.mode = parse_enum(key, v, kModeNames);
  else if (key == "interleave") n.interleave = parse_bool(key, v);
  else if (key == "bn_strategy") n.bn = parse_enum(key, v, kBnNames);
  else if (key == "norm") n.norm = parse_enum(key, v, kNormNames);
  else if (key == "num_classes") n.num_classes = parse_number<int>(key, v);
  else if (key == "input_channels") n.input.c = parse_number<std::size_t>(key, v);
  else if (key == "input_height") n.input.h = parse_number<std::size_t>(key, v);
  else if (key == "input_width") n.input.w = parse_number<std::size_t>(key, v);
  else if (key == "vgg_fc_width") n.vgg_fc_width = parse_number<int>(key, v);
  else if (key == "epochs") t.epochs = parse_number<int>(key, v);
  else if (key == "batch_size") t.batch_size = parse_number<int>(key, v);
  else if (key == "lr0") t.lr0 = parse_number<double>(key, v);
  else if (key == "momentum") t.momentum = parse_number<double>(key, v);
  else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, v);
  else if (key == "lr_drops") {
    t.lr_drops.clear();
    std::istringstream is(v);
    for (std::string part; std::getline(is, part, ',');)
      if (!trim(part).empty()) t.lr_drops.push_back(parse_number<double>(key, trim(part)));
  } else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "augment") t.augment = parse_bool(key, v);
  else if (key == "train_limit") t.train_limit = parse_number<std::size_t>(key, v);
  else if (key == "test_limit") t.test_limit = parse_number<std::size_t>(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Applies a `key=value` override string.
inline void apply_override(RunConfig& rc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
  set_config_value(rc, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
}

/// Reads `key = value` lines; '#' starts a comment.
inline RunConfig parse_config(std::istream& is, RunConfig rc = {}) {
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_override(rc, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rc;
}

inline void write_config(std::ostream& os, const RunConfig& rc) {
  using namespace detail;
  const auto& n = rc.net;
  const auto& t = rc.train;
  os << "arch = " << enum_name(n.arch, kArchNames) << '\n'
     << "depth = " << n.depth << '\n'
     << "width = " << n.width << '\n'
     << "mode = " << enum_name(n.mode, kModeNames) << '\n'
     << "interleave = " << (n.interleave ? "true" : "false") << '\n'
     << "bn_strategy = " << enum_name(n.bn, kBnNames) << '\n'
     << "norm = " << enum_name(n.norm, kNormNames) << '\n'
     << "num_classes = " << n.num_classes << '\n'
     << "input_channels = " << n.input.c << '\n'
     << "input_height = " << n.input.h << '\n'
     << "input_width = " << n.input.w << '\n'
     << "vgg_fc_width = " << n.vgg_fc_width << '\n'
     << "epochs = " << t.epochs << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "lr0 = " << t.lr0 << '\n'
     << "momentum = " << t.momentum << '\n'
     << "weight_decay = " << t.weight_decay << '\n'
     << "lr_drops = ";
  for (std::size_t i = 0; i < t.lr_drops.size(); ++i) os << (i ? "," : "") << t.lr_drops[i];
  os << '\n'
     << "seed = " << t.seed << '\n'
     << "augment = " << (t.augment ? "true" : "false") << '\n'
     << "train_limit = " << t.train_limit << '\n'
     << "test_limit = " << t.test_limit << '\n';
}

/// Full-scale training protocol: 300 epochs over the whole dataset.
inline void use_full_protocol(RunConfig& rc) {
  rc.train.epochs = 300;
  rc.train.batch_size = 100;
  rc.train.lr0 = 0.1;
  rc.train.momentum = 0.9;
  rc.train.weight_decay = 1e-4;
  rc.train.lr_drops = {0.5, 0.75};
  rc.train.train_limit = 0;
  rc.train.test_limit = 0;
}

}  // namespace combnet
