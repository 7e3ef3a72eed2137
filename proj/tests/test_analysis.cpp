#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "combnet/analysis/flops.hpp"
#include "combnet/analysis/grad_check.hpp"
#include "combnet/analysis/receptive_field.hpp"
#include "combnet/analysis/sparse.hpp"
#include "combnet/ops/layers.hpp"

using namespace combnet;

namespace {

Tensor4 randn(Shape4 s, std::mt19937_64& r) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor4 t(s);
  for (auto& v : t.data()) v = d(r);
  return t;
}

CombConvLayer same3x3(std::size_t cin, std::size_t cout, ConvMode mode = ConvMode::comb, int phase = 0,
                      bool interleave = true) {
  return CombConvLayer(Kernel4(cout, cin, 3, 1.0), {1, 1, 1}, mode, phase, interleave);
}

}  // namespace

TEST(Flops, CountsForThirtyTwoBySixtyFour) {
  const MacCount m = count_macs(same3x3(64, 64), {64, 32, 32});
  EXPECT_EQ(m.macs_standard, 37'748'736u);
  EXPECT_EQ(m.macs_comb, 18'939'904u);
  EXPECT_NEAR(static_cast<double>(m.macs_comb) / static_cast<double>(m.macs_standard), 0.5017, 5e-5);
  EXPECT_EQ(m.connections_removed, 32u * 32u * 32u * 8u * 64u);
}

TEST(Flops, StandardModeHasNoSaving) {
  const MacCount m = count_macs(same3x3(16, 8, ConvMode::standard), {16, 9, 9});
  EXPECT_EQ(m.macs_comb, m.macs_standard);
  EXPECT_EQ(m.connections_removed, 0u);
  EXPECT_EQ(m.reduction(), 0.0);
}

TEST(Flops, ReductionRatioClosedForm) {
  EXPECT_NEAR(reduction_ratio(3, 64), 0.49826388888, 1e-10);
  EXPECT_NEAR(reduction_ratio(3, 1), 0.5 - 1.0 / 9.0, 1e-15);
  EXPECT_GT(reduction_ratio(3, 1024), 0.499);
  EXPECT_DOUBLE_EQ(reduction_ratio(1, 1), -0.5);
}

TEST(Flops, DegenerateOneByOneUsesExactCounts) {
  // K=1, one channel: conv and uniform cost the same, so half the sites do
  // one MAC each and the shared uniform adds one per site.
  const CombConvLayer L(Kernel4(1, 1, 1, 1.0), {1, 0, 1});
  const MacCount m = count_macs(L, {1, 4, 4});
  EXPECT_EQ(m.macs_standard, 16u);
  EXPECT_EQ(m.macs_comb, 8u + 16u);
  EXPECT_DOUBLE_EQ(m.reduction(), -0.5);
}

TEST(Flops, MeasuredRatioMatchesClosedForm) {
  for (std::size_t c : {32u, 64u, 96u})
    for (std::size_t n : {8u, 16u, 32u}) {
      const MacCount m = count_macs(same3x3(c, c), {c, n, n});
      const double measured = static_cast<double>(m.macs_comb) / static_cast<double>(m.macs_standard);
      EXPECT_NEAR(measured, 1.0 - reduction_ratio(3, c), 1.0 / (n * n * 9.0 * c * c)) << c << " " << n;
    }
}

TEST(Flops, CsvHasHeaderAndTotal) {
  FlopReport r;
  r.per_layer.push_back({"conv0", count_macs(same3x3(2, 2), {2, 4, 4})});
  r.per_layer.push_back({"fc0", {10, 10, 0}});
  std::ostringstream os;
  r.write_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("layer,macs_standard,macs_comb,removed,ratio\n", 0), 0u);
  EXPECT_NE(s.find("\ntotal,"), std::string::npos);
  EXPECT_EQ(r.total().macs_standard, 2u * 16 * 9 * 2 + 10);
}

TEST(Lowering, ValidThreeByThreeOnFourByFour) {
  Kernel4 k(1, 1, 3);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v) k.set(0, 0, u, v, 1.0 + static_cast<double>(u * 3 + v));
  const CombConvLayer L(k, {1, 0, 1});
  const SparseMatrix m = lower_to_sparse(L, {1, 4, 4});
  ASSERT_EQ(m.rows, 4u);
  ASSERT_EQ(m.cols, 16u);
  const auto d = m.dense();
  auto stencil_row = [&](std::size_t row, std::size_t r0, std::size_t c0) {
    for (std::size_t col = 0; col < 16; ++col) {
      const std::size_t r = col / 4, c = col % 4;
      const bool in = r >= r0 && r < r0 + 3 && c >= c0 && c < c0 + 3;
      EXPECT_EQ(d[row * 16 + col], in ? k.at(0, 0, r - r0, c - c0) : 0.0) << row << "," << col;
    }
  };
  stencil_row(0, 0, 0);
  stencil_row(3, 1, 1);
  for (std::size_t col = 0; col < 16; ++col) {
    EXPECT_EQ(d[16 + col], col == 6 ? 1.0 : 0.0);
    EXPECT_EQ(d[32 + col], col == 9 ? 1.0 : 0.0);
  }
}

TEST(Lowering, StandardModeHasFourStencils) {
  const SparseMatrix m = lower_to_sparse(CombConvLayer(Kernel4(1, 1, 3, 2.0), {1, 0, 1}, ConvMode::standard), {1, 4, 4});
  EXPECT_EQ(m.nnz(), 36u);
  const auto y = m.spmv(std::vector<double>(16, 1.0));
  for (double v : y) EXPECT_EQ(v, 18.0);
}

TEST(Lowering, SpmvEqualsForward) {
  std::mt19937_64 r(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t G = trial % 5 == 0 ? 2 : 1, S = 1 + trial % 2, K = trial % 3 == 0 ? 5 : 3;
    const CombConvLayer L(Kernel4(randn({4, 4 / G, K, K}, r)), {S, K / 2, G}, ConvMode::comb,
                          trial % 2, trial % 4 < 2, trial % 3 ? UniformNorm::by_c_out : UniformNorm::by_c_in);
    const Tensor4 x = randn({1, 4, 6, 7}, r);
    const auto y = lower_to_sparse(L, {4, 6, 7}).spmv(x.data());
    const Tensor4 ref = comb_conv_forward(x, L);
    ASSERT_EQ(y.size(), ref.size());
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_EQ(y[i], ref[i]) << trial << " " << i;
  }
}

TEST(Lowering, UniformRowsHaveOneEntryPerGroupChannel) {
  const CombConvLayer L(Kernel4(4, 2, 3, 1.0), {1, 1, 2}, ConvMode::comb, 0, true);
  const SparseMatrix m = lower_to_sparse(L, {4, 3, 3});
  std::vector<std::size_t> per_row(m.rows, 0);
  for (const auto& e : m.entries) ++per_row[e.row];
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = 0; q < 3; ++q)
        if (!L.is_conv_site(p, q, j)) {
          EXPECT_EQ(per_row[(j * 3 + p) * 3 + q], 2u);
        }
}

TEST(Lowering, TripletFileRoundTrip) {
  std::mt19937_64 r(2);
  const CombConvLayer L(Kernel4(randn({2, 2, 3, 3}, r)), {1, 1, 1});
  const SparseMatrix m = lower_to_sparse(L, {2, 4, 4});
  std::stringstream ss;
  m.write(ss);
  const SparseMatrix back = SparseMatrix::read(ss);
  EXPECT_EQ(back.rows, m.rows);
  EXPECT_EQ(back.cols, m.cols);
  EXPECT_EQ(back.dense(), m.dense());
  std::istringstream bad("2 2 1\n5 0 1.0\n");
  EXPECT_THROW(SparseMatrix::read(bad), IngestionError);
}

TEST(ReceptiveField, OneStandardLayerIsThreeByThree) {
  const std::vector<CombConvLayer> net{same3x3(1, 1, ConvMode::standard)};
  const auto rf = receptive_field(net, {1, 7, 7}, {0, 0, 3, 3});
  EXPECT_EQ(rf.input_coords.size(), 9u);
  const BoundingBox b = rf.bounding_box();
  EXPECT_EQ(b.height(), 3u);
  EXPECT_EQ(b.width(), 3u);
}

TEST(ReceptiveField, UniformUnitIsSingleton) {
  const std::vector<CombConvLayer> net{same3x3(1, 1, ConvMode::comb, 0, false)};
  const auto rf = receptive_field(net, {1, 7, 7}, {0, 0, 3, 4});
  EXPECT_EQ(rf.input_coords, (std::set<std::pair<std::size_t, std::size_t>>{{3, 4}}));
}

TEST(ReceptiveField, TwoPhaseAlternatingCombLayersMatchStandard) {
  const std::vector<CombConvLayer> comb{same3x3(2, 2, ConvMode::comb, 0), same3x3(2, 2, ConvMode::comb, 1)};
  const std::vector<CombConvLayer> std2{same3x3(2, 2, ConvMode::standard), same3x3(2, 2, ConvMode::standard)};
  int checked = 0;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t p = 0; p < 12; ++p)
      for (std::size_t q = 0; q < 12; ++q) {
        if (!comb[1].is_conv_site(p, q, j)) continue;
        const UnitPos u{1, j, p, q};
        EXPECT_EQ(receptive_field(comb, {2, 12, 12}, u).input_coords,
                  receptive_field(std2, {2, 12, 12}, u).input_coords)
            << j << " " << p << " " << q;
        ++checked;
      }
  EXPECT_EQ(checked, 144);
}

TEST(ReceptiveField, SingleChannelStackLosesCoverage) {
  const std::vector<CombConvLayer> comb{same3x3(1, 1, ConvMode::comb, 0), same3x3(1, 1, ConvMode::comb, 1)};
  const std::vector<CombConvLayer> std2{same3x3(1, 1, ConvMode::standard), same3x3(1, 1, ConvMode::standard)};
  int differ = 0;
  for (std::size_t p = 2; p < 10; ++p)
    for (std::size_t q = 2; q < 10; ++q) {
      if (!comb[1].is_conv_site(p, q, 0)) continue;
      const UnitPos u{1, 0, p, q};
      differ += receptive_field(comb, {1, 12, 12}, u).input_coords !=
                receptive_field(std2, {1, 12, 12}, u).input_coords;
    }
  EXPECT_GT(differ, 0);
}

TEST(ReceptiveField, Errors) {
  const std::vector<CombConvLayer> net{same3x3(2, 2)};
  EXPECT_THROW(receptive_field(net, {2, 5, 5}, {1, 0, 0, 0}), GeometryError);
  EXPECT_THROW(receptive_field(net, {2, 5, 5}, {0, 0, 5, 0}), GeometryError);
  EXPECT_THROW(receptive_field(net, {3, 5, 5}, {0, 0, 0, 0}), ShapeError);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  std::mt19937_64 r(9);
  Tensor4 x = randn({2, 3, 1, 1}, r);
  Tensor4 w = randn({2, 3, 1, 1}, r);
  const Tensor4 b({2, 1, 1, 1});
  const Tensor4 go = randn({2, 2, 1, 1}, r);
  LinearGrads an = linear_backward(x, w, go);
  auto f = [&] { return dot(linear(x, w, b), go); };
  EXPECT_LT(grad_check(f, w.data(), an.grad_w.data()).max_rel_error, 1e-6);
  an.grad_w[4] *= 1.1;
  const GradCheckResult bad = grad_check(f, w.data(), an.grad_w.data());
  EXPECT_GT(bad.max_rel_error, 1e-2);
  EXPECT_EQ(bad.worst_index, 4u);
}

TEST(GradCheck, Errors) {
  std::vector<double> in{1.0};
  const std::vector<double> g{1.0, 2.0};
  EXPECT_THROW(grad_check([] { return 0.0; }, in, g), ShapeError);
  const std::vector<double> g1{1.0};
  EXPECT_THROW(grad_check([] { return 0.0; }, in, g1, 0.0), ConfigError);
  EXPECT_THROW(grad_check([] { return std::nan(""); }, in, g1), NumericalError);
}
