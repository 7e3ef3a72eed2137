#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "combnet/training/augment.hpp"
#include "combnet/training/dataset.hpp"
#include "combnet/training/sgd.hpp"
#include "combnet/training/trainer.hpp"

using namespace combnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("combnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_records(const fs::path& file, int count, int label_base, std::size_t extra_bytes = 0) {
  std::ofstream f(file, std::ios::binary);
  for (int r = 0; r < count; ++r) {
    f.put(static_cast<char>((label_base + r) % 10));
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) f.put(static_cast<char>((i * 7 + r * 13) % 256));
  }
  for (std::size_t i = 0; i < extra_bytes; ++i) f.put('\x01');
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

NetworkConfig tiny_net() {
  NetworkConfig c;
  c.input = {3, 8, 8};
  c.num_classes = 4;
  return c;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 20;
  t.lr0 = 0.05;
  t.seed = 42;
  return t;
}

}  // namespace

TEST(Cifar, ReadsRecordsAndScalesPixels) {
  const fs::path dir = scratch("read");
  write_records(dir / "b.bin", 3, 4);
  const Dataset d = read_cifar_batch(dir / "b.bin");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.labels, (std::vector<int>{4, 5, 6}));
  EXPECT_EQ(d.images.shape(), (Shape4{3, 3, 32, 32}));
  EXPECT_DOUBLE_EQ(d.images.at(1, 0, 0, 1), ((1 * 7 + 13) % 256) / 255.0);
  EXPECT_EQ(read_cifar_batch(dir / "b.bin", 2).size(), 2u);
}

TEST(Cifar, TruncatedFileReportsOffset) {
  const fs::path dir = scratch("trunc");
  write_records(dir / "b.bin", 2, 0, 100);
  try {
    read_cifar_batch(dir / "b.bin");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(2 * kCifarRecordBytes)), std::string::npos)
        << e.what();
  }
  EXPECT_THROW(read_cifar_batch(dir / "missing.bin"), IngestionError);
}

TEST(Cifar, LabelOutOfRange) {
  const fs::path dir = scratch("label");
  write_records(dir / "b.bin", 2, 0);
  {
    std::fstream f(dir / "b.bin", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(kCifarRecordBytes));
    f.put(static_cast<char>(255));
  }
  EXPECT_THROW(read_cifar_batch(dir / "b.bin"), LabelError);
}

TEST(Cifar, LoadSplitsAndStandardizes) {
  const fs::path dir = scratch("load");
  for (int b = 1; b <= 5; ++b) write_records(dir / ("data_batch_" + std::to_string(b) + ".bin"), 3, b);
  write_records(dir / "test_batch.bin", 4, 0);
  auto [train, test] = load_cifar10(dir);
  EXPECT_EQ(train.size(), 15u);
  EXPECT_EQ(test.size(), 4u);
  const ChannelStats st = channel_stats(train);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(st.mean[c], 0.0, 1e-6);
    EXPECT_NEAR(st.std[c], 1.0, 1e-6);
  }
  auto limited = load_cifar10(dir, 5, 2);
  EXPECT_EQ(limited.first.size(), 5u);
  EXPECT_EQ(limited.second.size(), 2u);
}

TEST(Augment, CentreCropWithoutFlipIsIdentity) {
  Tensor4 img({1, 3, 6, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  EXPECT_EQ(augment_with(img, 4, 4, false), img);
  EXPECT_EQ(augment_with(augment_with(img, 4, 4, true), 4, 4, true), img);
}

TEST(Augment, ShiftMovesContentAndFillsZeros) {
  Tensor4 img({1, 1, 3, 3}, 1.0);
  const Tensor4 a = augment_with(img, 5, 4, false);  // shift up by one row
  for (std::size_t q = 0; q < 3; ++q) {
    EXPECT_EQ(a.at(0, 0, 1, q), 1.0);
    EXPECT_EQ(a.at(0, 0, 2, q), 0.0);
  }
}

TEST(Augment, SameSeedSameOutput) {
  Tensor4 img({1, 3, 8, 8});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(static_cast<double>(i));
  Rng a(99), b(99);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(augment(img, a), augment(img, b));
}

TEST(Schedule, StepDropsAtHalfAndThreeQuarters) {
  TrainConfig c;
  c.epochs = 300;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(149, c), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(150, c), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(225, c), 0.001);
  int drops = 0;
  for (int e = 1; e < 300; ++e) {
    EXPECT_LE(lr_at(e, c), lr_at(e - 1, c));
    drops += lr_at(e, c) < lr_at(e - 1, c);
  }
  EXPECT_EQ(drops, 2);
  EXPECT_THROW(lr_at(300, c), ConfigError);
}

TEST(Sgd, ClosedFormUpdates) {
  std::vector<double> w{1.0, -2.0};
  std::vector<ParamRef> params{{"w", {2, 1, 1, 1}, w, true}};
  TrainConfig c;
  c.weight_decay = 0.0;
  std::vector<std::vector<double>> vel;
  const std::vector<Tensor4> zero{Tensor4({2, 1, 1, 1})};
  sgd_step(params, zero, vel, 0.1, c);
  EXPECT_EQ(w, (std::vector<double>{1.0, -2.0}));

  const std::vector<Tensor4> g{Tensor4({2, 1, 1, 1}, {0.5, 1.0})};
  vel.clear();
  sgd_step(params, g, vel, 0.1, c);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.5);
  sgd_step(params, g, vel, 0.1, c);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.5 * (2.0 + c.momentum));
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 * 1.0 * (2.0 + c.momentum));
}

TEST(Sgd, WeightDecayOnlyWhereFlagged) {
  std::vector<double> w{1.0}, b{1.0};
  std::vector<ParamRef> params{{"w", {1, 1, 1, 1}, w, true}, {"b", {1, 1, 1, 1}, b, false}};
  TrainConfig c;
  c.weight_decay = 0.5;
  std::vector<std::vector<double>> vel;
  sgd_step(params, std::vector<Tensor4>{Tensor4({1, 1, 1, 1}), Tensor4({1, 1, 1, 1})}, vel, 0.1, c);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(b[0], 1.0);
}

TEST(Sgd, NonFiniteGradientAbortsBeforeAnyUpdate) {
  std::vector<double> w{1.0}, b{1.0};
  std::vector<ParamRef> params{{"w", {1, 1, 1, 1}, w, true}, {"b", {1, 1, 1, 1}, b, false}};
  std::vector<std::vector<double>> vel;
  const std::vector<Tensor4> g{Tensor4({1, 1, 1, 1}, 1.0), Tensor4({1, 1, 1, 1}, std::numeric_limits<double>::quiet_NaN())};
  try {
    sgd_step(params, g, vel, 0.1, TrainConfig{}, "epoch 3 step 7");
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 3 step 7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(w[0], 1.0);
}

TEST(Train, RandomInitIsNearChance) {
  NetworkConfig c = tiny_net();
  c.num_classes = 10;
  Network net = build_comb_stack(c, 6);
  const Dataset d = make_synthetic_dataset(1000, 10, c.input, 3);
  EXPECT_NEAR(evaluate(net, d), 0.10, 0.03);
}

TEST(Train, SameSeedSameHistoryAndCheckpoints) {
  const Dataset tr = make_synthetic_dataset(120, 4, {3, 8, 8}, 1, 1.0, Split::train);
  const Dataset te = make_synthetic_dataset(40, 4, {3, 8, 8}, 1, 1.0, Split::test);
  const TrainConfig t = tiny_train(4);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    Network net = build_comb_stack(tiny_net(), t.seed);
    train(net, tr, te, t, TrainOutputs{dir, false, nullptr});
  }
  for (const char* f : {"history.csv", "checkpoint.bin", "checkpoint_epoch2.bin", "checkpoint_epoch3.bin"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string hist = slurp(a / "history.csv");
  EXPECT_EQ(hist.rfind("epoch,train_loss,test_acc,lr,seconds\n", 0), 0u);
}

TEST(Train, DifferentSeedsDiffer) {
  const Dataset tr = make_synthetic_dataset(60, 4, {3, 8, 8}, 1);
  TrainConfig t = tiny_train(1);
  Network n1 = build_comb_stack(tiny_net(), 1), n2 = build_comb_stack(tiny_net(), 1);
  const History h1 = train(n1, tr, tr, t);
  t.seed = 43;
  const History h2 = train(n2, tr, tr, t);
  EXPECT_NE(h1.epochs[0].train_loss, h2.epochs[0].train_loss);
}

TEST(Train, MemorizesOneHundredImages) {
  const Dataset d = make_synthetic_dataset(100, 4, {3, 8, 8}, 17, 2.0);
  TrainConfig t = tiny_train(1);
  t.augment = false;
  t.lr_drops.clear();
  Network net = build_comb_stack(tiny_net(), 5);
  double loss = 1e9;
  int epoch = 0;
  for (; epoch < 200 && loss >= 0.05; ++epoch) {
    t.seed = static_cast<std::uint64_t>(epoch);
    loss = train(net, d, Dataset{}, t).epochs.back().train_loss;
  }
  EXPECT_LT(loss, 0.05) << "after " << epoch << " epochs";
}

TEST(Train, NonFiniteLossAbortsWithContext) {
  Dataset d = make_synthetic_dataset(40, 4, {3, 8, 8}, 2);
  d.images[5] = std::numeric_limits<double>::infinity();
  TrainConfig t = tiny_train(1);
  t.augment = false;
  Network net = build_comb_stack(tiny_net(), 1);
  try {
    train(net, d, d, t);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0 step"), std::string::npos) << e.what();
  }
}
