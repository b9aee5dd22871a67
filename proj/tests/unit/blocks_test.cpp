#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "test_util.hpp"
#include "vimf/blocks.hpp"
#include "vimf/errors.hpp"
#include "vimf/model.hpp"
#include "vimf/ops.hpp"

using namespace vimf;
using testing_util::randn;

namespace {

BlockConfig small_cfg(BlockVariant v, FftMode mode = FftMode::per_channel) {
  BlockConfig c;
  c.variant = v;
  c.dim = 8;
  c.state = 4;
  c.heads = 2;
  c.fft_mode = mode;
  c.grid = {3, 4};
  c.has_class_token = true;
  return c;
}

BlockParams small_block(BlockVariant v, std::uint64_t seed = 1, FftMode mode = FftMode::per_channel) {
  ParamFactory f(seed);
  return make_block(f, "blk", small_cfg(v, mode));
}

// |sum_xy f e^{-2 pi i (ux/H + vy/W)}|, evaluated term by term.
double amp_direct(const std::vector<double>& f, std::size_t h, std::size_t w, std::size_t u, std::size_t v) {
  std::complex<double> acc = 0;
  for (std::size_t x = 0; x < h; ++x)
    for (std::size_t y = 0; y < w; ++y)
      acc += f[x * w + y] * std::polar(1.0, -2.0 * std::numbers::pi * (double(u * x) / h + double(v * y) / w));
  return std::sqrt(std::norm(acc) + 1e-12);
}

}  // namespace

TEST(TokenGrid, RoundTripAndLayout) {
  const Tensor t = randn(1, {12, 5});
  const Tensor g = tokens_to_grid(t, {3, 4});
  ASSERT_EQ(g.shape(), (Shape{5, 3, 4}));
  EXPECT_DOUBLE_EQ(g.at({2, 1, 3}), t.at({7, 2}));  // token 1*4+3, channel 2
  EXPECT_TRUE(bit_equal(grid_to_tokens(g), t));
  EXPECT_THROW(tokens_to_grid(t, {3, 3}), ShapeError);
}

TEST(FreqFuse, MatchesDirectAmplitudePerChannel) {
  FreqFusionParams p;
  p.alpha = Tensor::from_values({0.7});
  p.beta = Tensor::from_values({-0.3});
  p.mix.weight = randn(2, {5, 5});
  p.mix.bias = randn(3, {5});
  const Tensor x = randn(4, {13, 5});
  const Tensor y = freq_fuse(x, {3, 4}, p, FftMode::per_channel, true);

  Tensor expect_in(Shape{13, 5});
  for (std::size_t d = 0; d < 5; ++d) {
    expect_in.mutable_data()[d] = x.at({0, d});
    std::vector<double> plane(12);
    for (std::size_t i = 0; i < 12; ++i) plane[i] = x.at({i + 1, d});
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 4; ++v) {
        const std::size_t tok = u * 4 + v + 1;
        expect_in.mutable_data()[tok * 5 + d] = 0.7 * amp_direct(plane, 3, 4, u, v) - 0.3 * x.at({tok, d});
      }
  }
  EXPECT_LT(max_abs_diff(y, linear(expect_in, p.mix.weight, p.mix.bias)), 1e-10);
}

TEST(FreqFuse, SequenceGridUsesWholeTokenMatrix) {
  FreqFusionParams p;
  p.alpha = Tensor::from_values({1.0});
  p.beta = Tensor::from_values({0.0});
  p.mix.weight = Tensor(Shape{3, 3});
  set_identity(p.mix);
  const Tensor x = randn(5, {6, 3});
  const Tensor y = freq_fuse(x, {}, p, FftMode::sequence_grid, false);
  std::vector<double> flat(x.data().begin(), x.data().end());
  for (std::size_t u = 0; u < 6; ++u)
    for (std::size_t v = 0; v < 3; ++v) EXPECT_NEAR(y.at({u, v}), amp_direct(flat, 6, 3, u, v), 1e-10);
}

TEST(FreqFuse, AmplitudeBranchIgnoresCyclicShifts) {
  const BlockParams b = small_block(BlockVariant::vim_f);
  const Tensor spatial = randn(6, {12, 8});
  Tensor shifted(Shape{12, 8});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t d = 0; d < 8; ++d)
        shifted.mutable_data()[(((r + 2) % 3) * 4 + (c + 1) % 4) * 8 + d] = spatial.at({r * 4 + c, d});
  const Tensor cls = randn(7, {1, 8});
  FusionTrace t0, t1;
  (void)freq_fuse(concat_rows({cls, spatial}), {3, 4}, *b.fusion, FftMode::per_channel, true, &t0);
  (void)freq_fuse(concat_rows({cls, shifted}), {3, 4}, *b.fusion, FftMode::per_channel, true, &t1);
  EXPECT_LT(max_abs_diff(t0.amplitude, t1.amplitude), 1e-10);
}

TEST(FreqFuse, IdentitySettingsPassTokensThrough) {
  BlockParams b = small_block(BlockVariant::vim_f);
  fill(b.fusion->alpha, 0.0);
  fill(b.fusion->beta, 1.0);
  set_identity(b.fusion->mix);
  const Tensor x = randn(8, {13, 8});
  EXPECT_LT(max_abs_diff(freq_fuse(x, {3, 4}, *b.fusion, FftMode::per_channel, true), x), 1e-15);
  EXPECT_THROW(freq_fuse(randn(9, {12, 8}), {3, 4}, *b.fusion, FftMode::per_channel, true), ShapeError);
}

TEST(Blocks, FrequencyBlockReducesToPlainBlock) {
  BlockParams f = small_block(BlockVariant::vim_f, 3);
  BlockParams plain = small_block(BlockVariant::vim, 3);
  fill(f.fusion->alpha, 0.0);
  fill(f.fusion->beta, 1.0);
  set_identity(f.fusion->mix);
  const Tensor x = randn(10, {13, 8});
  // Same seed and names: the shared mixer parameters are identical.
  EXPECT_TRUE(bit_equal(f.mixer.in_proj.weight, plain.mixer.in_proj.weight));
  EXPECT_LT(max_abs_diff(apply_block(x, f), apply_block(x, plain)), 1e-12);
}

TEST(Blocks, HybridWithSilentAttentionMatchesFrequencyBlock) {
  BlockParams h = small_block(BlockVariant::vim_f_h, 4);
  BlockParams f = small_block(BlockVariant::vim_f, 4);
  fill(h.attention->out.weight, 0.0);
  fill(h.attention->out.bias, 0.0);
  const Tensor x = randn(11, {13, 8});
  EXPECT_LT(max_abs_diff(apply_block(x, h), apply_block(x, f)), 1e-12);
}

TEST(Blocks, ConvFreeVariantHasNoConv) {
  const BlockParams cf = small_block(BlockVariant::vim_f_cf);
  EXPECT_FALSE(cf.mixer.fwd.conv.has_value());
  EXPECT_FALSE(cf.mixer.bwd.conv.has_value());
  EXPECT_TRUE(small_block(BlockVariant::vim_f).mixer.fwd.conv.has_value());
  const Tensor y = apply_block(randn(12, {13, 8}), cf);
  EXPECT_EQ(y.shape(), (Shape{13, 8}));
  EXPECT_TRUE(all_finite(y));
}

TEST(Blocks, OutputShapeAndInitialFusionScalars) {
  for (auto v : {BlockVariant::vim, BlockVariant::vim_f, BlockVariant::vim_f_h, BlockVariant::vim_f_cf}) {
    const BlockParams b = small_block(v);
    EXPECT_EQ(apply_block(randn(13, {13, 8}), b).shape(), (Shape{13, 8})) << to_string(v);
    EXPECT_EQ(b.fusion.has_value(), v != BlockVariant::vim);
    if (b.fusion) {
      EXPECT_DOUBLE_EQ(b.fusion->alpha.item(), 0.1);
      EXPECT_DOUBLE_EQ(b.fusion->beta.item(), 1.0);
    }
  }
  const BlockParams s = small_block(BlockVariant::vim_f, 1, FftMode::sequence_grid);
  EXPECT_EQ(apply_block(randn(14, {13, 8}), s).shape(), (Shape{13, 8}));
}

TEST(BlockConfig, Validation) {
  BlockConfig c = small_cfg(BlockVariant::vim_f_h);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_cfg(BlockVariant::vim_f);
  c.grid = {};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fft_mode = FftMode::sequence_grid;
  EXPECT_NO_THROW(c.validate());
  c.dim = 40;
  EXPECT_EQ(c.resolved_dt_rank(), 3u);
  c.dt_rank = 5;
  EXPECT_EQ(c.resolved_dt_rank(), 5u);
}

TEST(Attention, MatchesQuadraticForm) {
  const std::size_t len = 7, dk = 3, dv = 4;
  const Tensor q = elu_plus_one(randn(15, {len, dk})), k = elu_plus_one(randn(16, {len, dk}));
  const Tensor v = randn(17, {len, dv});
  const Tensor y = kernelized_attention(q, k, v);
  for (std::size_t l = 0; l < len; ++l) {
    std::vector<double> w(len);
    double total = 0;
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t a = 0; a < dk; ++a) w[j] += q.at({l, a}) * k.at({j, a});
      total += w[j];
    }
    for (std::size_t b = 0; b < dv; ++b) {
      double acc = 0;
      for (std::size_t j = 0; j < len; ++j) acc += w[j] / total * v.at({j, b});
      EXPECT_NEAR(y.at({l, b}), acc, 1e-12);
    }
  }
}

TEST(Attention, WeightsSumToOne) {
  const Tensor q = elu_plus_one(randn(18, {5, 2})), k = elu_plus_one(randn(19, {5, 2}));
  const Tensor y = kernelized_attention(q, k, Tensor(Shape{5, 3}, 1.0));
  for (double v : y.data()) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Attention, DenominatorFloor) {
  const Tensor q(Shape{2, 2}, 0.0), k(Shape{2, 2}, 1.0);
  const Tensor y = kernelized_attention(q, k, Tensor(Shape{2, 1}, 1.0));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Attention, ResidualLayerIsPermutationEquivariant) {
  const BlockParams h = small_block(BlockVariant::vim_f_h, 5);
  const Tensor x = randn(20, {6, 8});
  const Tensor y = linear_attention(x, *h.attention);
  const Tensor yf = linear_attention(flip_rows(x), *h.attention);
  EXPECT_LT(max_abs_diff(flip_rows(y), yf), 1e-12);
}

TEST(Blocks, ZeroOutputProjectionGivesIdentity) {
  for (auto v : {BlockVariant::vim, BlockVariant::vim_f, BlockVariant::vim_f_h, BlockVariant::vim_f_cf}) {
    BlockParams b = small_block(v, 6);
    fill(b.mixer.out_proj.weight, 0.0);
    if (b.attention) {
      fill(b.attention->out.weight, 0.0);
      fill(b.attention->out.bias, 0.0);
    }
    const Tensor x = randn(21, {13, 8});
    EXPECT_TRUE(bit_equal(apply_block(x, b), x)) << to_string(v);
  }
}

TEST(Blocks, MambaLastTokenSeesEarlyOrder) {
  const BlockParams b = small_block(BlockVariant::vim, 7);
  const Tensor x = randn(22, {13, 8});
  // Swap tokens 1 and 2, leave the rest in place.
  const Tensor swapped = concat_rows({slice_rows(x, 0, 1), slice_rows(x, 2, 1), slice_rows(x, 1, 1), slice_rows(x, 3, 10)});
  const Tensor y0 = apply_block(x, b), y1 = apply_block(swapped, b);
  EXPECT_GT(max_abs_diff(slice_rows(y0, 12, 1), slice_rows(y1, 12, 1)), 1e-6);

  const BlockParams h = small_block(BlockVariant::vim_f_h, 7);
  const Tensor a0 = linear_attention(x, *h.attention), a1 = linear_attention(swapped, *h.attention);
  EXPECT_LT(max_abs_diff(slice_rows(a0, 12, 1), slice_rows(a1, 12, 1)), 1e-12);
}

TEST(Attention, CountedOpsDoubleWithLength) {
  BlockConfig h = small_cfg(BlockVariant::vim_f_h, FftMode::sequence_grid);
  BlockConfig f = small_cfg(BlockVariant::vim_f, FftMode::sequence_grid);
  auto attn = [&](std::size_t l) { return block_macs(h, l) - block_macs(f, l); };
  EXPECT_EQ(attn(64), 2 * attn(32));
  EXPECT_EQ(attn(32), 4 * 32 * 8 * 8 + 2 * 32 * 8 * 4);
}

TEST(FreqFuse, ConstantGridPutsEverythingAtDc) {
  FreqFusionParams p;
  p.alpha = Tensor::from_values({1.0});
  p.beta = Tensor::from_values({0.0});
  p.mix.weight = Tensor(Shape{2, 2});
  set_identity(p.mix);
  const Tensor x(Shape{16, 2}, 0.75);
  const Tensor y = freq_fuse(x, {4, 4}, p, FftMode::per_channel, false);
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(y.at({t, d}), t == 0 ? 0.75 * 16 : 0.0, 1e-6 + 1e-12);
}

TEST(Attention, SingleTokenReturnsItsValue) {
  const Tensor q = elu_plus_one(randn(23, {1, 3})), k = elu_plus_one(randn(24, {1, 3})), v = randn(25, {1, 4});
  EXPECT_LT(max_abs_diff(kernelized_attention(q, k, v), v), 1e-15);
}
