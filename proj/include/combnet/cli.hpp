#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "combnet/analysis/flops.hpp"
#include "combnet/analysis/receptive_field.hpp"
#include "combnet/analysis/sparse.hpp"
#include "combnet/checkpoint.hpp"
#include "combnet/config.hpp"
#include "combnet/error.hpp"
#include "combnet/network.hpp"
#include "combnet/training/dataset.hpp"
#include "combnet/training/trainer.hpp"
#include "combnet/verify.hpp"

namespace combnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool full = false;
  std::string data;
  bool synthetic = false;
};

inline void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", a.seed, "seed for init, shuffling and augmentation");
  cmd->add_flag("--full", a.full, "full-scale protocol: 300 epochs on the whole dataset");
  cmd->add_option("--data", a.data, "CIFAR-10 binary directory (default: $COMBNET_DATA)");
  cmd->add_flag("--synthetic", a.synthetic, "use a seeded synthetic dataset instead of CIFAR-10");
}

inline RunConfig load_run_config(const RunArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw ConfigError("cannot open config " + a.config);
    rc = parse_config(f);
  }
  if (a.full) use_full_protocol(rc);
  for (const auto& kv : a.overrides) apply_override(rc, kv);
  if (a.seed) rc.train.seed = *a.seed;
  rc.net.validate();
  rc.train.validate();
  return rc;
}

inline std::pair<Dataset, Dataset> load_data(const RunArgs& a, const RunConfig& rc) {
  if (a.synthetic) {
    const std::size_t n_train = rc.train.train_limit ? rc.train.train_limit : 4000;
    const std::size_t n_test = rc.train.test_limit ? rc.train.test_limit : 1000;
    return {make_synthetic_dataset(n_train, rc.net.num_classes, rc.net.input, rc.train.seed, 0.5, Split::train),
            make_synthetic_dataset(n_test, rc.net.num_classes, rc.net.input, rc.train.seed, 0.5, Split::test)};
  }
  std::string dir = a.data;
  if (dir.empty()) {
    if (const char* env = std::getenv("COMBNET_DATA")) dir = env;
  }
  if (dir.empty()) throw ConfigError("no dataset: pass --data, set COMBNET_DATA or use --synthetic");
  return load_cifar10(dir, rc.train.train_limit, rc.train.test_limit);
}

inline std::string mega(std::uint64_t macs) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(macs) / 1e6);
  return buf;
}

}  // namespace detail

/// Parses argv and runs one verb. Usage errors return 2, failed
/// verification or runtime errors 1.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"comb convolution toolkit", "combnet"};
  app.require_subcommand(1);

  detail::RunArgs run;
  std::string out_path;
  bool no_timing = false;
  std::string checkpoint;
  bool macs_x2 = false;

  auto* train_cmd = app.add_subcommand("train", "train a network and write history + checkpoint");
  detail::add_run_options(train_cmd, run);
  train_cmd->add_option("--out", out_path, "output directory")->required();
  train_cmd->add_flag("--no-timing", no_timing, "write 0 in the seconds column of history.csv");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  detail::add_run_options(eval_cmd, run);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);

  auto* flops_cmd = app.add_subcommand("flops", "MAC counts for a config, standard and comb side by side");
  detail::add_run_options(flops_cmd, run);
  flops_cmd->add_option("--out", out_path, "also write the per-layer CSV here");
  flops_cmd->add_flag("--macs-x2", macs_x2, "count multiply and add separately");

  std::size_t rf_layers = 2, rf_channels = 2, rf_size = 12, rf_layer = 1;
  std::optional<std::size_t> rf_channel, rf_p, rf_q;
  std::string rf_mode = "comb";
  bool rf_no_interleave = false;
  auto* rf_cmd = app.add_subcommand("rf", "receptive field of one unit in a stack of 3x3 layers");
  rf_cmd->add_option("--layers", rf_layers, "stacked layers")->check(CLI::PositiveNumber);
  rf_cmd->add_option("--channels", rf_channels, "channels per layer")->check(CLI::PositiveNumber);
  rf_cmd->add_option("--size", rf_size, "square input extent")->check(CLI::PositiveNumber);
  rf_cmd->add_option("--layer", rf_layer, "layer of the unit (0-based)");
  rf_cmd->add_option("--channel", rf_channel, "output channel of the unit (default: first conv site)");
  rf_cmd->add_option("--p", rf_p, "row of the unit (default: centre)");
  rf_cmd->add_option("--q", rf_q, "column of the unit (default: centre)");
  rf_cmd->add_option("--mode", rf_mode, "comb or standard")->check(CLI::IsMember({"comb", "standard"}));
  rf_cmd->add_flag("--no-interleave", rf_no_interleave, "same mask in every channel");
  std::uint64_t rf_seed = 0;
  rf_cmd->add_option("--seed", rf_seed, "unused; accepted for uniformity");

  std::size_t lw_kernel = 3, lw_h = 4, lw_w = 4, lw_cin = 1, lw_cout = 1, lw_stride = 1, lw_pad = 0,
              lw_groups = 1;
  int lw_phase = 0;
  bool lw_interleave = false, lw_standard = false;
  std::optional<std::uint64_t> lw_seed;
  auto* lower_cmd = app.add_subcommand("lower", "write the sparse matrix of one comb layer");
  lower_cmd->add_option("--kernel", lw_kernel, "odd kernel size");
  lower_cmd->add_option("--height", lw_h, "input height");
  lower_cmd->add_option("--width", lw_w, "input width");
  lower_cmd->add_option("--cin", lw_cin, "input channels");
  lower_cmd->add_option("--cout", lw_cout, "output channels");
  lower_cmd->add_option("--stride", lw_stride, "stride");
  lower_cmd->add_option("--pad", lw_pad, "zero padding");
  lower_cmd->add_option("--groups", lw_groups, "channel groups");
  lower_cmd->add_option("--phase", lw_phase, "layer phase 0 or 1");
  lower_cmd->add_flag("--interleave", lw_interleave, "shift the mask per output channel");
  lower_cmd->add_flag("--standard", lw_standard, "lower a standard convolution");
  lower_cmd->add_option("--seed", lw_seed, "random normal kernel from this seed (default: all ones)");
  lower_cmd->add_option("--out", out_path, "output file (default: stdout)");

  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run the hermetic oracle suite");
  verify_cmd->add_option("--seed", verify_seed, "seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      const RunConfig rc = detail::load_run_config(run);
      auto [train_set, test_set] = detail::load_data(run, rc);
      Network net = build_network(rc.net, rc.train.seed);
      const std::filesystem::path dir(out_path);
      std::filesystem::create_directories(dir);
      {
        std::ofstream f(dir / "config.cfg");
        write_config(f, rc);
      }
      TrainOutputs o{dir, !no_timing, &out};
      const History h = train(net, train_set, test_set, rc.train, o);
      out << "final test_acc " << h.epochs.back().test_acc << '\n';
      return kExitOk;
    }
    if (*eval_cmd) {
      const RunConfig rc = detail::load_run_config(run);
      auto data = detail::load_data(run, rc);
      Network net = build_network(rc.net, rc.train.seed, WeightInit::zeros);
      std::ifstream f(checkpoint, std::ios::binary);
      load_checkpoint(net, f);
      out << "test_acc " << evaluate(net, data.second) << '\n';
      return kExitOk;
    }
    if (*flops_cmd) {
      RunConfig rc = detail::load_run_config(run);
      rc.net.mode = ConvMode::comb;
      const Network net = build_network(rc.net, 0, WeightInit::zeros);
      const FlopReport r = flop_report(net);
      const std::uint64_t scale = macs_x2 ? 2 : 1;
      const char* unit = macs_x2 ? "FLOPs" : "MACs";
      out << "layer standard_M comb_M\n";
      for (const auto& l : r.per_layer) {
        out << l.name << ' ' << detail::mega(l.macs.macs_standard * scale) << ' '
            << detail::mega(l.macs.macs_comb * scale) << '\n';
      }
      const MacCount t = r.total();
      out << "standard " << detail::mega(t.macs_standard * scale) << " M " << unit << '\n'
          << "comb " << detail::mega(t.macs_comb * scale) << " M " << unit << '\n';
      if (!out_path.empty()) {
        std::ofstream f(out_path);
        if (!f) throw ConfigError("cannot write " + out_path);
        r.write_csv(f, scale);
      }
      return kExitOk;
    }
    if (*rf_cmd) {
      const ConvMode mode = rf_mode == "standard" ? ConvMode::standard : ConvMode::comb;
      std::vector<CombConvLayer> net;
      for (std::size_t l = 0; l < rf_layers; ++l) {
        net.emplace_back(Kernel4(rf_channels, rf_channels, 3, 1.0), ConvGeometry{1, 1, 1}, mode,
                         static_cast<int>(l % 2), !rf_no_interleave);
      }
      UnitPos u{rf_layer, 0, rf_p.value_or(rf_size / 2), rf_q.value_or(rf_size / 2)};
      if (rf_channel) {
        u.channel = *rf_channel;
      } else if (u.layer < net.size()) {
        while (u.channel + 1 < rf_channels && !net[u.layer].is_conv_site(u.p, u.q, u.channel)) ++u.channel;
      }
      const auto field = receptive_field(net, Shape3{rf_channels, rf_size, rf_size}, u);
      const bool conv_site = net.at(u.layer).is_conv_site(u.p, u.q, u.channel);
      out << "unit layer=" << u.layer << " channel=" << u.channel << " p=" << u.p << " q=" << u.q
          << (conv_site ? " (conv site)" : " (uniform site)") << '\n';
      out << "inputs " << field.input_coords.size() << '\n';
      for (const auto& [r, c] : field.input_coords) out << r << ',' << c << '\n';
      const BoundingBox b = field.bounding_box();
      out << "bbox rows " << b.row_min << ".." << b.row_max << " cols " << b.col_min << ".."
          << b.col_max << " (" << b.height() << "x" << b.width() << ")\n";
      return kExitOk;
    }
    if (*lower_cmd) {
      Kernel4 k(lw_cout, lw_groups ? lw_cin / lw_groups : 0, lw_kernel, 1.0);
      if (lw_seed) {
        Rng rng(*lw_seed);
        std::normal_distribution<double> d(0.0, 1.0);
        for (auto& v : k.tensor().data()) v = d(rng);
      }
      const CombConvLayer layer(std::move(k), ConvGeometry{lw_stride, lw_pad, lw_groups},
                                lw_standard ? ConvMode::standard : ConvMode::comb, lw_phase,
                                lw_interleave);
      const SparseMatrix m = lower_to_sparse(layer, Shape3{lw_cin, lw_h, lw_w});
      if (out_path.empty()) {
        m.write(out);
      } else {
        std::ofstream f(out_path);
        if (!f) throw ConfigError("cannot write " + out_path);
        m.write(f);
      }
      return kExitOk;
    }
    if (*verify_cmd) {
      for (const auto& r : run_verify(verify_seed)) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << '\n';
        if (!r.passed) {
          err << "verification failed: " << r.name << ": " << r.detail << '\n';
          return kExitFailure;
        }
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace combnet::cli
