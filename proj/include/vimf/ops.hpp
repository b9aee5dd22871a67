#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "vimf/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// any input requires grad; without an active tape it is a plain computation.
namespace vimf {

struct Pair {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

// out[l,j] = sum_i x[l,i] * w[i,j] (+ b[j]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
inline Tensor matmul(const Tensor& a, const Tensor& b) { return linear(a, b); }

// Cross-correlation with zero padding: x[C,H,W], k[Cout,C,Kh,Kw] -> [Cout,H',W'].
Tensor conv2d(const Tensor& x, const Tensor& k, Pair stride, Pair padding, const Tensor& b = {});

// out[l,d] = sum_{j<K, l-j>=0} x[l-j,d] * k[d,j] (+ b[d]); never reads the future.
Tensor conv1d_depthwise_causal(const Tensor& x, const Tensor& k, const Tensor& b = {});

Tensor softplus(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// elu(x) + 1: strictly positive feature map used by kernelized attention.
Tensor elu_plus_one(const Tensor& x);

// Normalizes over the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// s is a one-element tensor broadcast over x.
Tensor scale_by(const Tensor& s, const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [L,D] -> [1,D]
Tensor mean_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);

// Axis-0 slicing and concatenation, any rank.
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor flip_rows(const Tensor& x);
// Stacks equal-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

// Last-axis slicing/concatenation for rank-2 tensors.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mean softmax cross-entropy of logits[B,K] against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

}  // namespace vimf
