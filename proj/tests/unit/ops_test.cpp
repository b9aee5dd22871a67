#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "vimf/errors.hpp"
#include "vimf/ops.hpp"
#include "vimf/rng.hpp"

using namespace vimf;
using testing_util::randn;

TEST(Linear, MatchesTripleLoop) {
  const Tensor x = randn(1, {5, 4}), w = randn(2, {4, 3}), b = randn(3, {3});
  const Tensor y = linear(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{5, 3}));
  for (std::size_t l = 0; l < 5; ++l)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < 4; ++i) acc += x.at({l, i}) * w.at({i, j});
      EXPECT_NEAR(y.at({l, j}), acc, 1e-12);
    }
  EXPECT_THROW(linear(x, randn(4, {3, 3})), DimensionError);
  EXPECT_THROW(linear(x, w, randn(5, {4})), DimensionError);
}

TEST(Conv2d, MatchesDirectLoopWithPaddingAndStride) {
  const std::size_t ci = 2, co = 3, h = 7, w = 6, k = 3, s = 2, p = 1;
  const Tensor x = randn(4, {ci, h, w}), ker = randn(5, {co, ci, k, k}), b = randn(6, {co});
  const Tensor y = conv2d(x, ker, {s, s}, {p, p}, b);
  const std::size_t ho = (h + 2 * p - k) / s + 1, wo = (w + 2 * p - k) / s + 1;
  ASSERT_EQ(y.shape(), (Shape{co, ho, wo}));
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long yy = static_cast<long>(r * s + u) - static_cast<long>(p);
              const long xx = static_cast<long>(c * s + v) - static_cast<long>(p);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += x.at({i, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)}) * ker.at({o, i, u, v});
            }
        EXPECT_NEAR(y.at({o, r, c}), acc, 1e-12);
      }
}

TEST(Conv2d, RejectsBadShapes) {
  EXPECT_THROW(conv2d(randn(1, {2, 4, 4}), randn(2, {1, 3, 3, 3}), {1, 1}, {0, 0}), DimensionError);
  EXPECT_THROW(conv2d(randn(1, {1, 2, 2}), randn(2, {1, 1, 3, 3}), {1, 1}, {0, 0}), DimensionError);
  EXPECT_THROW(conv2d(randn(1, {1, 4, 4}), randn(2, {1, 1, 3, 3}), {0, 1}, {0, 0}), DimensionError);
}

TEST(Conv1dCausal, HandCase) {
  // Impulse at t=0 reproduces the kernel taps and never leaks backwards.
  const Tensor x = Tensor(Shape{3, 1}, {1, 0, 0});
  const Tensor k = Tensor(Shape{1, 2}, {0.5, 0.25});
  const Tensor y = conv1d_depthwise_causal(x, k);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.25);
  EXPECT_DOUBLE_EQ(y[2], 0.0);
}

TEST(Conv1dCausal, FutureInputsDoNotAffectPast) {
  Tensor x = randn(7, {6, 3});
  const Tensor k = randn(8, {3, 4}), b = randn(9, {3});
  const Tensor y0 = conv1d_depthwise_causal(x, k, b);
  x.mutable_data()[4 * 3 + 1] += 10.0;
  const Tensor y1 = conv1d_depthwise_causal(x, k, b);
  for (std::size_t i = 0; i < 4 * 3; ++i) EXPECT_DOUBLE_EQ(y0[i], y1[i]);
  EXPECT_NE(y0[4 * 3 + 1], y1[4 * 3 + 1]);
}

TEST(Pointwise, KnownValues) {
  const Tensor sp = softplus(Tensor::from_values({0.0, 1000.0, -1000.0}));
  EXPECT_NEAR(sp[0], std::numbers::ln2, 1e-15);
  EXPECT_DOUBLE_EQ(sp[1], 1000.0);
  EXPECT_GE(sp[2], 0.0);
  EXPECT_LT(sp[2], 1e-300);

  EXPECT_NEAR(silu(Tensor::from_values({1.0}))[0], 0.7310585786300049, 1e-15);
  EXPECT_DOUBLE_EQ(silu(Tensor::from_values({0.0}))[0], 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::from_values({0.0}))[0], 0.5);
  EXPECT_TRUE(std::isfinite(sigmoid(Tensor::from_values({-800.0}))[0]));

  const Tensor e = elu_plus_one(Tensor::from_values({2.0, 0.0, -1.0}));
  EXPECT_DOUBLE_EQ(e[0], 3.0);
  EXPECT_DOUBLE_EQ(e[1], 1.0);
  EXPECT_NEAR(e[2], std::exp(-1.0), 1e-15);
}

TEST(LayerNorm, TwoPointCase) {
  // {a, b} normalizes to {-1, +1} up to eps.
  const Tensor x = Tensor(Shape{1, 2}, {1.0, 3.0});
  const Tensor g = Tensor::from_values({2.0, 2.0}), b = Tensor::from_values({0.5, 0.5});
  const Tensor y = layer_norm(x, g, b, 0.0);
  EXPECT_NEAR(y[0], -1.5, 1e-12);
  EXPECT_NEAR(y[1], 2.5, 1e-12);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  const Tensor x = randn(10, {4, 8}, 3.0);
  const Tensor y = layer_norm(x, Tensor(Shape{8}, 1.0), Tensor(Shape{8}, 0.0), 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at({r, c});
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 8, 1.0, 1e-9);
  }
}

TEST(Reductions, SumIsCompensated) {
  // 1 + 1e-16 * 1e4 is lost by naive left-to-right summation.
  std::vector<double> v(10001, 1e-16);
  v[0] = 1.0;
  const Tensor s = sum(Tensor(Shape{v.size()}, v));
  EXPECT_NEAR(s.item(), 1.0 + 1e-12, 1e-16);
}

TEST(Reductions, MeanAndMeanRows) {
  const Tensor x = Tensor::from_rows({{1, 2}, {3, 6}});
  EXPECT_DOUBLE_EQ(mean(x).item(), 3.0);
  const Tensor m = mean_rows(x);
  EXPECT_EQ(m.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(m[0], 2.0);
  EXPECT_DOUBLE_EQ(m[1], 4.0);
}

TEST(Layout, SlicingConcatFlipTranspose) {
  const Tensor x = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_TRUE(bit_equal(concat_rows({slice_rows(x, 0, 1), slice_rows(x, 1, 2)}), x));
  EXPECT_TRUE(bit_equal(concat_cols({slice_cols(x, 0, 2), slice_cols(x, 2, 1)}), x));
  EXPECT_TRUE(bit_equal(flip_rows(flip_rows(x)), x));
  EXPECT_DOUBLE_EQ(flip_rows(x).at({0, 0}), 7.0);
  EXPECT_DOUBLE_EQ(transpose(x).at({0, 2}), 7.0);
  EXPECT_EQ(stack({x, x}).shape(), (Shape{2, 3, 3}));
  EXPECT_THROW(slice_rows(x, 2, 2), DimensionError);
  EXPECT_THROW(reshape(x, {2, 4}), DimensionError);
  EXPECT_THROW(concat_rows({x, Tensor(Shape{1, 2})}), DimensionError);
}

TEST(CrossEntropy, MatchesLogSoftmax) {
  const Tensor logits = Tensor::from_rows({{1.0, 2.0, 3.0}, {0.0, 0.0, 0.0}});
  const double l0 = -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double l1 = std::log(3.0);
  EXPECT_NEAR(cross_entropy(logits, {2, 1}).item(), 0.5 * (l0 + l1), 1e-14);
  EXPECT_THROW(cross_entropy(logits, {3, 0}), DomainError);
  EXPECT_THROW(cross_entropy(logits, {0}), DimensionError);
}

TEST(CrossEntropy, StableForLargeLogits) {
  const Tensor logits = Tensor::from_rows({{1000.0, 0.0}});
  EXPECT_NEAR(cross_entropy(logits, {0}).item(), 0.0, 1e-300);
  EXPECT_NEAR(cross_entropy(logits, {1}).item(), 1000.0, 1e-9);
}

TEST(Linear, RandomShapesUpToEight) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t l = 1 + rng.below(8), i = 1 + rng.below(8), o = 1 + rng.below(8);
    const Tensor x = randn(100 + trial, {l, i}), w = randn(200 + trial, {i, o});
    const Tensor y = linear(x, w);
    for (std::size_t a = 0; a < l; ++a)
      for (std::size_t b = 0; b < o; ++b) {
        double acc = 0;
        for (std::size_t k = 0; k < i; ++k) acc += x.at({a, k}) * w.at({k, b});
        EXPECT_NEAR(y.at({a, b}), acc, 1e-12);
      }
  }
}

TEST(Conv1dCausal, RandomShapesUpToEight) {
  Rng rng(78);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t l = 1 + rng.below(8), d = 1 + rng.below(8), kw = 1 + rng.below(4);
    const Tensor x = randn(300 + trial, {l, d}), k = randn(400 + trial, {d, kw});
    const Tensor y = conv1d_depthwise_causal(x, k);
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < kw; ++j)
          if (j <= t) acc += x.at({t - j, c}) * k.at({c, j});
        EXPECT_NEAR(y.at({t, c}), acc, 1e-12);
      }
  }
}

TEST(Tape, SecondUseEqualsDuplicatedInput) {
  // f(x, x) with one leaf vs f(a, b) with two leaves: grad x = grad a + grad b.
  const Tensor base = randn(31, {3, 4});
  auto f = [](const Tensor& a, const Tensor& b) { return sum(mul(silu(a), exp(scale(b, 0.3)))); };
  Tensor x = base.clone();
  x.set_requires_grad(true);
  Tensor a = base.clone(), b = base.clone();
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  ComputationTape tape;
  TapeScope scope(tape);
  tape.backward(f(x, x));
  tape.backward(f(a, b));
  for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(x.grad()[i], a.grad()[i] + b.grad()[i], 1e-14);
}

TEST(Tape, BackwardIsLinearInCombinedLosses) {
  const Tensor base = randn(32, {2, 5});
  auto grad_of = [&](double al, double be) {
    Tensor x = base.clone();
    x.set_requires_grad(true);
    ComputationTape tape;
    TapeScope scope(tape);
    tape.backward(add(scale(sum(softplus(x)), al), scale(sum(mul(x, x)), be)));
    return x.grad_tensor();
  };
  const Tensor gf = grad_of(1, 0), gg = grad_of(0, 1), gc = grad_of(0.7, -2.5);
  for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(gc[i], 0.7 * gf[i] - 2.5 * gg[i], 1e-12);
}
