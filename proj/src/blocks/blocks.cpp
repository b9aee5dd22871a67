#include "vimf/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "vimf/errors.hpp"
#include "vimf/fft.hpp"
#include "vimf/ops.hpp"

namespace vimf {

std::size_t BlockConfig::resolved_dt_rank() const {
  if (dt_rank) return dt_rank;
  return std::max<std::size_t>(1, (dim + 15) / 16);
}

void BlockConfig::validate() const {
  if (dim == 0 || state == 0) throw ConfigError("block dim and state must be positive");
  if (expand < 1) throw ConfigError("block expand ratio must be >= 1");
  if (variant == BlockVariant::vim_f_h && (heads == 0 || dim % heads != 0)) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide the attention width " + std::to_string(dim));
  }
  if (variant != BlockVariant::vim && fft_mode == FftMode::per_channel && grid.size() == 0) {
    throw ConfigError("per-channel frequency fusion needs a token grid");
  }
}

namespace {

Tensor mixer_core(const Tensor& normed, const VimMixer& m, const SsmOptions& opts) {
  const std::size_t inner = m.out_proj.in_features();
  const Tensor proj = m.in_proj(normed);
  const Tensor u = slice_cols(proj, 0, inner);
  const Tensor z = slice_cols(proj, inner, inner);
  return bidir_ssm_branch(u, z, m.fwd, m.bwd, m.out_proj, opts);
}

SsmOptions ssm_options(const BlockConfig& cfg) { return SsmOptions{cfg.rule}; }

}  // namespace

Tensor tokens_to_grid(const Tensor& tokens, Grid grid) {
  if (tokens.rank() != 2 || tokens.dim(0) != grid.size()) {
    throw ShapeError("token matrix " + shape_str(tokens.shape()) + " does not fill a " + std::to_string(grid.rows) +
                     "x" + std::to_string(grid.cols) + " grid");
  }
  return reshape(transpose(tokens), {tokens.dim(1), grid.rows, grid.cols});
}

Tensor grid_to_tokens(const Tensor& grid) {
  if (grid.rank() != 3) throw DimensionError("grid_to_tokens expects [D,H,W], got " + shape_str(grid.shape()));
  return transpose(reshape(grid, {grid.dim(0), grid.dim(1) * grid.dim(2)}));
}

Tensor vim_block(const Tensor& x, const VimMixer& mixer, const SsmOptions& opts) {
  return add(x, mixer_core(mixer.norm(x), mixer, opts));
}

Tensor freq_fuse(const Tensor& x, Grid grid, const FreqFusionParams& p, FftMode mode, bool has_class_token,
                 FusionTrace* trace) {
  if (x.rank() != 2) throw DimensionError("freq_fuse expects [L,D], got " + shape_str(x.shape()));
  const std::size_t offset = has_class_token ? 1 : 0;
  if (x.dim(0) <= offset) throw ShapeError("freq_fuse: no spatial tokens");
  const std::size_t n = x.dim(0) - offset;
  const Tensor spatial = has_class_token ? slice_rows(x, 1, n) : x;

  Tensor amplitude;
  if (mode == FftMode::per_channel) {
    if (n != grid.size()) {
      throw ShapeError("freq_fuse: " + std::to_string(n) + " spatial tokens cannot form the declared " +
                       std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " grid");
    }
    amplitude = grid_to_tokens(amp2d_per_channel(tokens_to_grid(spatial, grid)));
  } else {
    amplitude = amp2d_sequence_grid(spatial);
  }
  if (trace) trace->amplitude = amplitude;

  Tensor fused = add(scale_by(p.alpha, amplitude), scale_by(p.beta, spatial));
  if (has_class_token) fused = concat_rows({slice_rows(x, 0, 1), fused});
  return p.mix(fused);
}

Tensor vim_f_block(const Tensor& x, const VimMixer& mixer, const FreqFusionParams& fusion, const BlockConfig& cfg,
                   FusionTrace* trace) {
  const Tensor fused = freq_fuse(mixer.norm(x), cfg.grid, fusion, cfg.fft_mode, cfg.has_class_token, trace);
  return add(x, mixer_core(fused, mixer, ssm_options(cfg)));
}

Tensor kernelized_attention(const Tensor& phi_q, const Tensor& phi_k, const Tensor& v) {
  if (phi_q.rank() != 2 || phi_q.shape() != phi_k.shape() || v.rank() != 2 || v.dim(0) != phi_k.dim(0)) {
    throw DimensionError("kernelized_attention: q " + shape_str(phi_q.shape()) + ", k " + shape_str(phi_k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  const std::size_t len = phi_q.dim(0), dk = phi_q.dim(1), dv = v.dim(1);
  std::vector<double> kv(dk * dv, 0.0), ksum(dk, 0.0), den(len);
  for (std::size_t j = 0; j < len; ++j)
    for (std::size_t a = 0; a < dk; ++a) {
      const double kj = phi_k[j * dk + a];
      ksum[a] += kj;
      for (std::size_t b = 0; b < dv; ++b) kv[a * dv + b] += kj * v[j * dv + b];
    }
  Tensor out({len, dv});
  auto o = out.mutable_data();
  for (std::size_t l = 0; l < len; ++l) {
    double s = 0.0;
    for (std::size_t a = 0; a < dk; ++a) s += phi_q[l * dk + a] * ksum[a];
    den[l] = std::max(s, kAttentionDenominatorFloor);
    for (std::size_t a = 0; a < dk; ++a) {
      const double q = phi_q[l * dk + a];
      for (std::size_t b = 0; b < dv; ++b) o[l * dv + b] += q * kv[a * dv + b];
    }
    for (std::size_t b = 0; b < dv; ++b) o[l * dv + b] /= den[l];
  }
  return record_op(
      "kernelized_attention", {phi_q, phi_k, v}, out,
      [phi_q, phi_k, v, out, kv = std::move(kv), ksum = std::move(ksum), den = std::move(den), len, dk, dv](
          std::span<const double> g, const GradSlots& gi) {
        // out = num / den with num = Q KV and den = max(Q . ksum, floor).
        std::vector<double> gnum(len * dv), gden(len, 0.0);
        for (std::size_t l = 0; l < len; ++l) {
          const bool floored = den[l] == kAttentionDenominatorFloor;
          for (std::size_t b = 0; b < dv; ++b) {
            gnum[l * dv + b] = g[l * dv + b] / den[l];
            if (!floored) gden[l] -= g[l * dv + b] * out[l * dv + b] / den[l];
          }
        }
        if (gi[0]) {
          for (std::size_t l = 0; l < len; ++l)
            for (std::size_t a = 0; a < dk; ++a) {
              double acc = gden[l] * ksum[a];
              for (std::size_t b = 0; b < dv; ++b) acc += gnum[l * dv + b] * kv[a * dv + b];
              (*gi[0])[l * dk + a] += acc;
            }
        }
        if (!gi[1] && !gi[2]) return;
        std::vector<double> gkv(dk * dv, 0.0), gks(dk, 0.0);
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t a = 0; a < dk; ++a) {
            const double q = phi_q[l * dk + a];
            gks[a] += gden[l] * q;
            for (std::size_t b = 0; b < dv; ++b) gkv[a * dv + b] += q * gnum[l * dv + b];
          }
        for (std::size_t j = 0; j < len; ++j) {
          for (std::size_t a = 0; a < dk; ++a) {
            if (gi[1]) {
              double acc = gks[a];
              for (std::size_t b = 0; b < dv; ++b) acc += v[j * dv + b] * gkv[a * dv + b];
              (*gi[1])[j * dk + a] += acc;
            }
            if (gi[2]) {
              const double kj = phi_k[j * dk + a];
              for (std::size_t b = 0; b < dv; ++b) (*gi[2])[j * dv + b] += kj * gkv[a * dv + b];
            }
          }
        }
      });
}

Tensor linear_attention(const Tensor& x, const LinearAttention& attn) {
  const std::size_t d = x.dim(1);
  if (attn.heads == 0 || d % attn.heads != 0) {
    throw DimensionError("linear_attention: " + std::to_string(attn.heads) + " heads do not divide width " +
                         std::to_string(d));
  }
  const std::size_t dh = d / attn.heads;
  const Tensor xn = attn.norm(x);
  const Tensor q = elu_plus_one(attn.q(xn));
  const Tensor k = elu_plus_one(attn.k(xn));
  const Tensor v = attn.v(xn);
  std::vector<Tensor> heads;
  heads.reserve(attn.heads);
  for (std::size_t h = 0; h < attn.heads; ++h) {
    heads.push_back(kernelized_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh), slice_cols(v, h * dh, dh)));
  }
  const Tensor merged = attn.heads == 1 ? heads[0] : concat_cols(heads);
  return add(x, attn.out(merged));
}

Tensor vim_f_h_block(const Tensor& x, const LinearAttention& attn, const VimMixer& mixer,
                     const FreqFusionParams& fusion, const BlockConfig& cfg) {
  return vim_f_block(linear_attention(x, attn), mixer, fusion, cfg);
}

Tensor vim_f_cf_block(const Tensor& x, const VimMixer& mixer, const FreqFusionParams& fusion, const BlockConfig& cfg) {
  VimMixer conv_free = mixer;
  conv_free.fwd.conv.reset();
  conv_free.bwd.conv.reset();
  return vim_f_block(x, conv_free, fusion, cfg);
}

Tensor apply_block(const Tensor& x, const BlockParams& block) {
  const BlockConfig& cfg = block.cfg;
  switch (cfg.variant) {
    case BlockVariant::vim:
      return vim_block(x, block.mixer, ssm_options(cfg));
    case BlockVariant::vim_f:
      return vim_f_block(x, block.mixer, *block.fusion, cfg);
    case BlockVariant::vim_f_h:
      return vim_f_h_block(x, *block.attention, block.mixer, *block.fusion, cfg);
    case BlockVariant::vim_f_cf:
      return vim_f_cf_block(x, block.mixer, *block.fusion, cfg);
  }
  throw ConfigError("unknown block variant");
}

BlockParams make_block(ParamFactory& f, const std::string& name, const BlockConfig& cfg) {
  cfg.validate();
  BlockParams b;
  b.cfg = cfg;
  const std::size_t d = cfg.dim, di = cfg.inner();
  const S6Shape shape{di, cfg.state, cfg.resolved_dt_rank(),
                      cfg.variant == BlockVariant::vim_f_cf ? std::size_t{0} : cfg.conv_width, cfg.d_skip};
  if (cfg.variant == BlockVariant::vim_f_h) {
    LinearAttention a;
    a.norm = LayerNorm::make(f, name + ".attn.norm", d);
    a.q = Linear::make(f, name + ".attn.q", d, d, true);
    a.k = Linear::make(f, name + ".attn.k", d, d, true);
    a.v = Linear::make(f, name + ".attn.v", d, d, true);
    a.out = Linear::make(f, name + ".attn.out", d, d, true);
    a.heads = cfg.heads;
    b.attention = std::move(a);
  }
  b.mixer.norm = LayerNorm::make(f, name + ".norm", d);
  if (cfg.variant != BlockVariant::vim) {
    FreqFusionParams fp;
    fp.alpha = f.constant(name + ".fusion.alpha", {1}, cfg.alpha_init);
    fp.beta = f.constant(name + ".fusion.beta", {1}, cfg.beta_init);
    fp.mix = Linear::make(f, name + ".fusion.mix", d, d, true);
    b.fusion = std::move(fp);
  }
  b.mixer.in_proj = Linear::make(f, name + ".in_proj", d, 2 * di, false);
  b.mixer.fwd = make_scan_branch(f, name + ".fwd", shape);
  b.mixer.bwd = make_scan_branch(f, name + ".bwd", shape);
  b.mixer.out_proj = Linear::make(f, name + ".out_proj", di, d, false);
  return b;
}

const char* to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::vim: return "vim";
    case BlockVariant::vim_f: return "vim-f";
    case BlockVariant::vim_f_h: return "vim-f-h";
    case BlockVariant::vim_f_cf: return "vim-f-cf";
  }
  return "?";
}

const char* to_string(FftMode m) { return m == FftMode::per_channel ? "per-channel" : "sequence-grid"; }

}  // namespace vimf
