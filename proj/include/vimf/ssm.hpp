#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "vimf/nn.hpp"
#include "vimf/tensor.hpp"

namespace vimf {

enum class Discretization {
  zoh,    // exact zero-order hold
  euler,  // Bbar = delta * B
};

// Below this |delta * A| the ZOH input factor (e^z - 1)/z is replaced by its series.
inline constexpr double kZohSeriesThreshold = 1e-8;

struct S6Params {
  Tensor a_log;    // [Di,N]; A = -exp(a_log) < 0
  Linear x_proj;   // Di -> dt_rank + 2N, no bias
  Linear dt_proj;  // dt_rank -> Di, bias feeds softplus
  Tensor d_skip;   // [Di]; undefined disables the feedthrough

  std::size_t inner() const { return a_log.dim(0); }
  std::size_t state() const { return a_log.dim(1); }
  std::size_t dt_rank() const { return dt_proj.in_features(); }
};

struct CausalConv {
  Tensor weight;  // [Di,K]
  Tensor bias;    // [Di]
};

// One scan direction: optional depthwise causal conv, silu, then S6.
struct ScanBranch {
  std::optional<CausalConv> conv;
  S6Params s6;
};

struct SsmOptions {
  Discretization rule = Discretization::zoh;
};

struct Discretized {
  Tensor abar;  // [L,Di,N]
  Tensor bbar;  // [L,Di,N]
};

struct Selection {
  Tensor b;      // [L,N]
  Tensor c;      // [L,N]
  Tensor delta;  // [L,Di], strictly positive
};

// Abar = exp(delta*A), Bbar = (delta*A)^{-1}(exp(delta*A)-1) * delta * B, elementwise.
Discretized discretize(const Tensor& a, const Tensor& b, const Tensor& delta,
                       Discretization rule = Discretization::zoh);

Selection selective_params(const Tensor& x, const S6Params& p);

// h_t = Abar_t * h_{t-1} + Bbar_t * x_t,  y_t = C_t . h_t (+ d_skip * x_t), h_{-1} = 0.
Tensor scan_sequential(const Tensor& abar, const Tensor& bbar, const Tensor& c, const Tensor& x,
                       const Tensor& d_skip = {});

// Time-invariant systems only: K[j,d] = sum_n C[n] Abar[d,n]^j Bbar[d,n], shape [L,Di].
// Throws ContractError when Abar, Bbar or C vary over time.
Tensor scan_kernel(const Tensor& abar, const Tensor& bbar, const Tensor& c);

// y[t,d] = sum_{j<=t} K[j,d] x[t-j,d] (+ d_skip * x).
Tensor apply_scan_kernel(const Tensor& kernel, const Tensor& x, const Tensor& d_skip = {});

// Negative-definite diagonal state matrix -exp(a_log).
Tensor state_matrix(const S6Params& p);

// Full selective scan of u [L,Di].
Tensor s6(const Tensor& u, const S6Params& p, const SsmOptions& opts = {});

Tensor scan_branch(const Tensor& x, const ScanBranch& branch, const SsmOptions& opts = {});

// out_proj(((fwd(x) + flip(bwd(flip(x)))) * silu(z))).
Tensor bidir_ssm_branch(const Tensor& x, const Tensor& z, const ScanBranch& fwd, const ScanBranch& bwd,
                        const Linear& out_proj, const SsmOptions& opts = {});

struct S6Shape {
  std::size_t inner = 0;
  std::size_t state = 0;
  std::size_t dt_rank = 0;
  std::size_t conv_width = 4;  // 0 removes the conv
  bool d_skip = true;
};

// Canonical initialisation: -A spans 1..N per state index, softplus(dt bias)
// log-uniform in [1e-3, 1e-1], d_skip = 1, conv ~ uniform(+-1/sqrt(K)).
ScanBranch make_scan_branch(ParamFactory& f, const std::string& name, const S6Shape& shape);

}  // namespace vimf
