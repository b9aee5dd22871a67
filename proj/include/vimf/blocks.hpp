#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "vimf/nn.hpp"
#include "vimf/ssm.hpp"
#include "vimf/tensor.hpp"

namespace vimf {

enum class BlockVariant { vim, vim_f, vim_f_h, vim_f_cf };
enum class FftMode { per_channel, sequence_grid };

struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct BlockConfig {
  BlockVariant variant = BlockVariant::vim;
  std::size_t dim = 32;
  std::size_t state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;  // 0 -> max(1, ceil(dim / 16))
  FftMode fft_mode = FftMode::per_channel;
  std::size_t heads = 2;
  bool has_class_token = true;
  Grid grid;  // spatial layout of the non-class tokens
  bool d_skip = true;
  Discretization rule = Discretization::zoh;
  double alpha_init = 0.1;
  double beta_init = 1.0;

  std::size_t inner() const { return expand * dim; }
  std::size_t resolved_dt_rank() const;
  void validate() const;
};

// Pre-norm bidirectional Mamba mixer: norm -> in_proj -> (u, z) -> scans -> out_proj.
struct VimMixer {
  LayerNorm norm;
  Linear in_proj;  // D -> 2 * E * D, no bias
  ScanBranch fwd;
  ScanBranch bwd;
  Linear out_proj;  // E * D -> D, no bias
};

struct FreqFusionParams {
  Tensor alpha;  // [1] frequency-branch intensity
  Tensor beta;   // [1] spatial-branch intensity
  Linear mix;    // D -> D
};

struct LinearAttention {
  LayerNorm norm;
  Linear q, k, v;
  Linear out;
  std::size_t heads = 1;
};

struct BlockParams {
  BlockConfig cfg;
  VimMixer mixer;
  std::optional<FreqFusionParams> fusion;
  std::optional<LinearAttention> attention;
};

struct FusionTrace {
  Tensor amplitude;  // [n,D] amplitude branch before alpha scaling
};

// x + out_proj(bidir(in_proj(norm(x)))).
Tensor vim_block(const Tensor& x, const VimMixer& mixer, const SsmOptions& opts = {});

// Spatial tokens (class token excluded) -> alpha*amplitude + beta*x, then mix over D.
Tensor freq_fuse(const Tensor& x, Grid grid, const FreqFusionParams& p, FftMode mode, bool has_class_token,
                 FusionTrace* trace = nullptr);

// x + mixer_core(freq_fuse(norm(x))).
Tensor vim_f_block(const Tensor& x, const VimMixer& mixer, const FreqFusionParams& fusion, const BlockConfig& cfg,
                   FusionTrace* trace = nullptr);

// Non-causal kernelized attention core on already feature-mapped q, k:
// out[l] = phi_q[l] (sum_j phi_k[j] v[j]^T) / max(phi_q[l] . sum_j phi_k[j], 1e-6).
Tensor kernelized_attention(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v);
inline constexpr double kAttentionDenominatorFloor = 1e-6;

// x + out(concat_h attention_h(norm(x))) with elu+1 features.
Tensor linear_attention(const Tensor& x, const LinearAttention& attn);

Tensor vim_f_h_block(const Tensor& x, const LinearAttention& attn, const VimMixer& mixer,
                     const FreqFusionParams& fusion, const BlockConfig& cfg);

// vim_f_block whose mixer branches carry no depthwise conv.
Tensor vim_f_cf_block(const Tensor& x, const VimMixer& mixer, const FreqFusionParams& fusion, const BlockConfig& cfg);

Tensor apply_block(const Tensor& x, const BlockParams& block);

BlockParams make_block(ParamFactory& f, const std::string& name, const BlockConfig& cfg);

// Token rows [n,D] <-> channel grids [D,H,W], row-major scan order.
Tensor tokens_to_grid(const Tensor& tokens, Grid grid);
Tensor grid_to_tokens(const Tensor& grid);

const char* to_string(BlockVariant v);
const char* to_string(FftMode m);

}  // namespace vimf
