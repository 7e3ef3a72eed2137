#include <gtest/gtest.h>

#include <string>

#include "combnet/tensor.hpp"

using namespace combnet;

TEST(Tensor, NewFillsEveryElement) {
  const Tensor4 z = tensor_new({1, 1, 2, 2}, 0.0);
  EXPECT_EQ(z.size(), 4u);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);

  const Tensor4 ones = tensor_new({2, 3, 4, 4}, 1.0);
  EXPECT_EQ(ones.size(), 96u);
  EXPECT_EQ(ones.sum(), 96.0);
}

TEST(Tensor, ZeroChannelTensorIsEmptyButShaped) {
  const Tensor4 t = tensor_new({1, 0, 4, 4}, 5.0);
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.shape(), (Shape4{1, 0, 4, 4}));
}

TEST(Tensor, SetThenAtReadsBack) {
  Tensor4 t = tensor_new({2, 2, 3, 3}, 0.0);
  t.set(1, 0, 2, 1, 4.25);
  EXPECT_EQ(t.at(1, 0, 2, 1), 4.25);
  EXPECT_EQ(t.at(0, 0, 2, 1), 0.0);
}

TEST(Tensor, AtOnFilledTensor) {
  const Tensor4 t = tensor_new({1, 1, 3, 3}, 7.0);
  EXPECT_EQ(t.at(0, 0, 0, 0), 7.0);
}

TEST(Tensor, OutOfRangeIndexNamesTheAxis) {
  const Tensor4 t = tensor_new({1, 2, 3, 4}, 0.0);
  try {
    (void)t.at(0, 0, 3, 0);
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos) << e.what();
  }
  EXPECT_THROW((void)t.at(0, 0, 0, 4), IndexError);
  EXPECT_THROW((void)t.at(1, 0, 0, 0), IndexError);
  EXPECT_THROW((void)t.at(0, 2, 0, 0), IndexError);
}

TEST(Tensor, BufferSizeMustMatchShape) {
  EXPECT_THROW(Tensor4(Shape4{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, OffsetIsRowMajorNCHW) {
  const Tensor4 t({2, 3, 4, 5});
  EXPECT_EQ(t.offset(1, 2, 3, 4), ((1 * 3 + 2) * 4 + 3) * 5 + 4u);
}

TEST(Pad, ZeroPadIsIdentity) {
  Tensor4 t({1, 2, 3, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(pad2d(t, 0), t);
}

TEST(Pad, OnesAreCentred) {
  const Tensor4 p = pad2d(tensor_new({1, 1, 2, 2}, 1.0), 1);
  ASSERT_EQ(p.shape(), (Shape4{1, 1, 4, 4}));
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t w = 0; w < 4; ++w) {
      const bool inside = h >= 1 && h <= 2 && w >= 1 && w <= 2;
      EXPECT_EQ(p.at(0, 0, h, w), inside ? 1.0 : 0.0) << h << "," << w;
    }
}

TEST(Pad, SumIsPreservedAndCropInverts) {
  Tensor4 t({2, 3, 5, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * static_cast<double>(i % 7) - 1.0;
  const Tensor4 p = pad2d(t, 2);
  EXPECT_DOUBLE_EQ(p.sum(), t.sum());
  EXPECT_EQ(crop2d(p, 2), t);
  EXPECT_THROW(crop2d(t, 3), ShapeError);
}

TEST(Binary, AddZerosAndMulOnes) {
  Tensor4 x({1, 2, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) - 3.5;
  EXPECT_EQ(ew_binary(x, tensor_new(x.shape(), 0.0), BinaryOp::add), x);
  EXPECT_EQ(ew_binary(x, tensor_new(x.shape(), 1.0), BinaryOp::mul), x);
  EXPECT_EQ(ew_binary(x, x, BinaryOp::sub), tensor_new(x.shape(), 0.0));
}

TEST(Binary, MaskTimesComplementIsZero) {
  Tensor4 m({1, 1, 3, 3});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i * 7 % 3 == 0) ? 1.0 : 0.0;
  const Tensor4 inv = ew_binary(tensor_new(m.shape(), 1.0), m, BinaryOp::sub);
  EXPECT_EQ(ew_binary(m, inv, BinaryOp::mul), tensor_new(m.shape(), 0.0));
}

TEST(Binary, ShapeMismatchReportsBothShapes) {
  try {
    (void)ew_binary(Tensor4({1, 1, 2, 2}), Tensor4({1, 1, 2, 3}), BinaryOp::add);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1,1,2,2)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,1,2,3)"), std::string::npos) << msg;
  }
}

TEST(Kernel, RejectsNonSquare) {
  EXPECT_THROW(Kernel4(Tensor4({1, 1, 3, 2})), ShapeError);
  const Kernel4 k(4, 2, 3, 0.5);
  EXPECT_EQ(k.out_channels(), 4u);
  EXPECT_EQ(k.in_channels_per_group(), 2u);
  EXPECT_EQ(k.size(), 3u);
  EXPECT_EQ(k.at(3, 1, 2, 2), 0.5);
}
