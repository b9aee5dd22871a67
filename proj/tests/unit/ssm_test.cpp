#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vimf/errors.hpp"
#include "vimf/ops.hpp"
#include "vimf/ssm.hpp"

using namespace vimf;
using testing_util::randn;
using testing_util::randu;

TEST(Discretize, ZohSpotValue) {
  // A = -1, delta = ln 4: Abar = 1/4, Bbar = (1 - 1/4) * B.
  const Tensor a = Tensor(Shape{1, 1}, {-1.0});
  const Tensor b = Tensor(Shape{1, 1}, {2.0});
  const Tensor delta = Tensor(Shape{1, 1}, {std::log(4.0)});
  const Discretized d = discretize(a, b, delta);
  EXPECT_NEAR(d.abar[0], 0.25, 1e-15);
  EXPECT_NEAR(d.bbar[0], 1.5, 1e-15);
}

TEST(Discretize, EulerAndSmallArgumentLimit) {
  const Tensor a = Tensor(Shape{1, 2}, {-3.0, -1e-12});
  const Tensor b = Tensor(Shape{1, 2}, {1.0, 1.0});
  const Tensor delta = Tensor(Shape{1, 1}, {0.5});
  const Discretized e = discretize(a, b, delta, Discretization::euler);
  EXPECT_DOUBLE_EQ(e.bbar[0], 0.5);
  EXPECT_NEAR(e.abar[0], std::exp(-1.5), 1e-15);
  const Discretized z = discretize(a, b, delta);
  EXPECT_NEAR(z.bbar[0], (1.0 - std::exp(-1.5)) / 3.0, 1e-15);
  // (e^z - 1)/z -> 1 as z -> 0, so Bbar -> delta * B.
  EXPECT_NEAR(z.bbar[1], 0.5, 1e-12);
}

TEST(Discretize, RejectsNonPositiveStep) {
  const Tensor a = Tensor(Shape{1, 1}, {-1.0}), b = Tensor(Shape{1, 1}, {1.0});
  EXPECT_THROW(discretize(a, b, Tensor(Shape{1, 1}, {0.0})), DomainError);
  EXPECT_THROW(discretize(a, b, Tensor(Shape{1, 1}, {-0.1})), DomainError);
  EXPECT_THROW(discretize(a, Tensor(Shape{1, 2}), Tensor(Shape{1, 1}, {1.0})), DimensionError);
}

TEST(Scan, HandComputedRecurrence) {
  // h0 = 1, h1 = 0.5 * 1 + 1 = 1.5; y = h + 0.5 x.
  const Tensor abar = Tensor(Shape{2, 1, 1}, {0.5, 0.5});
  const Tensor bbar = Tensor(Shape{2, 1, 1}, {1.0, 1.0});
  const Tensor c = Tensor(Shape{2, 1}, {1.0, 1.0});
  const Tensor x = Tensor(Shape{2, 1}, {1.0, 1.0});
  const Tensor y = scan_sequential(abar, bbar, c, x, Tensor::from_values({0.5}));
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Scan, LtiKernelMatchesRecurrence) {
  const std::size_t len = 9, d = 3, n = 4;
  const Tensor a1 = randu(1, {d, n}, 0.1, 0.95), b1 = randn(2, {d, n}), c1 = randn(3, {n});
  Tensor abar(Shape{len, d, n}), bbar(Shape{len, d, n}), c(Shape{len, n});
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < d * n; ++i) {
      abar.mutable_data()[t * d * n + i] = a1[i];
      bbar.mutable_data()[t * d * n + i] = b1[i];
    }
    for (std::size_t s = 0; s < n; ++s) c.mutable_data()[t * n + s] = c1[s];
  }
  const Tensor x = randn(4, {len, d}), skip = randn(5, {d});
  const Tensor k = scan_kernel(abar, bbar, c);
  // K[j] = sum_n C Abar^j Bbar, checked directly.
  for (std::size_t j = 0; j < len; ++j)
    for (std::size_t k2 = 0; k2 < d; ++k2) {
      double ref = 0;
      for (std::size_t s = 0; s < n; ++s) ref += c1[s] * std::pow(a1[k2 * n + s], double(j)) * b1[k2 * n + s];
      EXPECT_NEAR(k.at({j, k2}), ref, 1e-12);
    }
  EXPECT_LT(max_abs_diff(apply_scan_kernel(k, x, skip), scan_sequential(abar, bbar, c, x, skip)), 1e-12);
}

TEST(Scan, KernelRejectsTimeVaryingSystems) {
  const Tensor abar = randu(1, {3, 2, 2}, 0.1, 0.9), bbar = randn(2, {3, 2, 2});
  EXPECT_THROW(scan_kernel(abar, bbar, Tensor(Shape{3, 2}, 1.0)), ContractError);
  Tensor a_lti(Shape{3, 2, 2}, 0.5), b_lti(Shape{3, 2, 2}, 1.0);
  EXPECT_THROW(scan_kernel(a_lti, b_lti, randn(3, {3, 2})), ContractError);
  EXPECT_NO_THROW(scan_kernel(a_lti, b_lti, Tensor(Shape{3, 2}, 1.0)));
}

namespace {

ScanBranch test_branch(std::uint64_t seed, std::size_t di, std::size_t n, std::size_t conv) {
  ParamFactory f(seed);
  return make_scan_branch(f, "b", S6Shape{di, n, 2, conv, true});
}

}  // namespace

TEST(Selective, MatchesScalarRecurrence) {
  const std::size_t len = 6, di = 4, n = 3;
  const ScanBranch br = test_branch(7, di, n, 0);
  const Tensor u = randn(8, {len, di});
  const Selection sel = selective_params(u, br.s6);
  const Tensor y = s6(u, br.s6);
  for (std::size_t k = 0; k < di; ++k) {
    std::vector<double> h(n, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      double acc = 0;
      const double dt = sel.delta.at({t, k});
      for (std::size_t s = 0; s < n; ++s) {
        const double a = -std::exp(br.s6.a_log.at({k, s}));
        h[s] = std::exp(dt * a) * h[s] + (std::exp(dt * a) - 1.0) / a * sel.b.at({t, s}) * u.at({t, k});
        acc += sel.c.at({t, s}) * h[s];
      }
      EXPECT_NEAR(y.at({t, k}), acc + u.at({t, k}), 1e-12);
    }
  }
}

TEST(Selective, IsCausal) {
  const ScanBranch br = test_branch(9, 4, 3, 4);
  Tensor u = randn(10, {8, 4});
  const Tensor y0 = scan_branch(u, br);
  u.mutable_data()[5 * 4 + 2] += 3.0;
  const Tensor y1 = scan_branch(u, br);
  for (std::size_t i = 0; i < 5 * 4; ++i) EXPECT_DOUBLE_EQ(y0[i], y1[i]);
}

TEST(Selective, BidirectionalFlipEquivariance) {
  const ScanBranch fwd = test_branch(11, 4, 3, 4), bwd = test_branch(12, 4, 3, 4);
  ParamFactory f(13);
  const Linear out = Linear::make(f, "out", 4, 5, false);
  const Tensor x = randn(14, {7, 4}), z = randn(15, {7, 4});
  const Tensor y = bidir_ssm_branch(x, z, fwd, bwd, out);
  const Tensor y_swapped = bidir_ssm_branch(flip_rows(x), flip_rows(z), bwd, fwd, out);
  EXPECT_LT(max_abs_diff(flip_rows(y), y_swapped), 1e-12);
  EXPECT_THROW(bidir_ssm_branch(x, randn(1, {6, 4}), fwd, bwd, out), DimensionError);
}

TEST(Selective, InitialisationRanges) {
  const std::size_t di = 6, n = 5;
  const ScanBranch br = test_branch(21, di, n, 4);
  const Tensor a = state_matrix(br.s6);
  for (std::size_t k = 0; k < di; ++k)
    for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(a.at({k, s}), -double(s + 1), 1e-12);
  const Tensor dt = softplus(br.s6.dt_proj.bias);
  for (double v : dt.data()) {
    EXPECT_GE(v, 1e-3 * (1 - 1e-9));
    EXPECT_LE(v, 1e-1 * (1 + 1e-9));
  }
  for (double v : br.s6.d_skip.data()) EXPECT_DOUBLE_EQ(v, 1.0);
  ASSERT_TRUE(br.conv.has_value());
  EXPECT_EQ(br.conv->weight.shape(), (Shape{di, 4}));
  EXPECT_FALSE(test_branch(21, di, n, 0).conv.has_value());
}

TEST(Scan, ImpulseResponseDecays) {
  // One state per channel, Abar in (0,1): the response C Abar^t Bbar shrinks monotonically.
  const std::size_t len = 40, d = 5;
  const Tensor a1 = randu(61, {d, 1}, 0.05, 0.99);
  Tensor abar(Shape{len, d, 1}), bbar(Shape{len, d, 1}, 1.0), c(Shape{len, 1}, 1.0), x(Shape{len, d});
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t k = 0; k < d; ++k) abar.mutable_data()[t * d + k] = a1[k];
  for (std::size_t k = 0; k < d; ++k) x.mutable_data()[k] = 1.0;
  const Tensor y = scan_sequential(abar, bbar, c, x);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t t = 1; t < len; ++t) EXPECT_LE(std::abs(y.at({t, k})), std::abs(y.at({t - 1, k})));
}

TEST(Scan, StateStaysWithinGeometricBound) {
  // |h_t| <= b / (1 - max Abar) when |x| <= 1 and |Bbar| <= b; read h out with C = e_s.
  const std::size_t len = 200, d = 3, n = 2;
  const Tensor abar = randu(62, {len, d, n}, 0.0, 0.9), bbar = randu(63, {len, d, n}, -0.5, 0.5);
  const Tensor x = randu(64, {len, d}, -1.0, 1.0);
  double bound = 0.5 / (1.0 - 0.9);
  for (std::size_t s = 0; s < n; ++s) {
    Tensor c(Shape{len, n});
    for (std::size_t t = 0; t < len; ++t) c.mutable_data()[t * n + s] = 1.0;
    const Tensor h = scan_sequential(abar, bbar, c, x);
    for (double v : h.data()) EXPECT_LE(std::abs(v), bound);
  }
}

TEST(Selective, BackwardBranchIsTimeReversedForward) {
  const ScanBranch br = test_branch(71, 4, 3, 4);
  Linear out;
  out.weight = Tensor(Shape{4, 4});
  set_identity(out);
  const Tensor x = randn(73, {6, 4});
  // Silence the forward branch: zero projections leave C = 0 and no skip.
  ScanBranch silent = br;
  silent.s6.x_proj.weight = Tensor(silent.s6.x_proj.weight.shape(), 0.0);
  silent.s6.d_skip = Tensor(Shape{4}, 0.0);
  const Tensor z(Shape{6, 4}, 50.0);  // silu(50) = 50 to double precision
  const Tensor y = bidir_ssm_branch(x, z, silent, br, out);
  const Tensor expect = scale(flip_rows(scan_branch(flip_rows(x), br)), 50.0);
  EXPECT_LT(max_abs_diff(y, expect), 1e-10);
}
