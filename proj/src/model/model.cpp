#include "vimf/model.hpp"

#include <cmath>

#include "vimf/errors.hpp"
#include "vimf/ops.hpp"

namespace vimf {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  ParamFactory f(seed);
  std::size_t final_dim = cfg_.dim;

  if (cfg_.is_staged()) {
    const auto& dims = cfg_.stage_dims;
    cf_stem_ = Conv2dParams::make(f, "stem.conv0", cfg_.in_channels, ConvSpec{7, 4, 3, dims[0]});
    std::size_t extent = (cfg_.resolution + 6 - 7) / 4 + 1;
    for (std::size_t s = 0; s < 4; ++s) {
      Stage st;
      const std::string prefix = "stages." + std::to_string(s);
      if (s > 0) {
        if (extent < 2) throw ConfigError("resolution too small for the stage hierarchy");
        st.downsample = Conv2dParams::make(f, prefix + ".downsample", dims[s - 1], ConvSpec{2, 2, 0, dims[s]});
        extent = (extent - 2) / 2 + 1;
      }
      st.grid = Grid{extent, extent};
      for (std::size_t b = 0; b < cfg_.stage_depths[s]; ++b) {
        const BlockConfig bc = cfg_.block_config(BlockVariant::vim_f_cf, dims[s], st.grid, false);
        st.blocks.push_back(make_block(f, prefix + ".blocks." + std::to_string(b), bc));
      }
      stages_.push_back(std::move(st));
    }
    final_dim = dims.back();
  } else {
    const std::size_t d = cfg_.dim;
    const std::size_t side = cfg_.token_grid_extent();
    const std::size_t n = side * side + (cfg_.use_class_token ? 1 : 0);
    if (cfg_.stem == StemKind::conv) {
      stem_ = make_conv_stem(f, "stem", cfg_.stem_config());
    } else {
      const std::size_t fan_in = cfg_.patch_size * cfg_.patch_size * cfg_.in_channels;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      patch_w_ = f.uniform("patch_embed.weight", {fan_in, d}, bound);
      patch_b_ = f.uniform("patch_embed.bias", {d}, bound);
    }
    if (cfg_.use_class_token) cls_ = f.normal("cls_token", {1, d}, 0.02);
    if (cfg_.use_pos_embed) pos_ = f.normal("pos_embed", {n, d}, 0.02);

    const std::size_t n_f = cfg_.f_block_count();
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      const BlockVariant v = i < n_f ? cfg_.variant : BlockVariant::vim;
      const BlockConfig bc = cfg_.block_config(v, d, Grid{side, side}, cfg_.use_class_token);
      blocks_.push_back(make_block(f, "blocks." + std::to_string(i), bc));
    }
  }

  norm_f_ = LayerNorm::make(f, "norm_f", final_dim);
  head_ = Linear::make(f, "head", final_dim, cfg_.num_classes, true);
  params_ = f.take();
}

Parameter& Model::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const Parameter* Model::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t Model::freeze(std::string_view suffix) {
  std::size_t n = 0;
  for (auto& p : params_) {
    if (ends_with(p.name, suffix)) {
      p.trainable = false;
      p.tensor.set_requires_grad(false);
      ++n;
    }
  }
  return n;
}

std::vector<BlockVariant> Model::block_variants() const {
  std::vector<BlockVariant> out;
  for (const auto& b : blocks_) out.push_back(b.cfg.variant);
  for (const auto& s : stages_) {
    for (const auto& b : s.blocks) out.push_back(b.cfg.variant);
  }
  return out;
}

Tensor Model::embed(const Tensor& img) const {
  if (img.rank() != 3 || img.dim(0) != cfg_.in_channels || img.dim(1) != cfg_.resolution ||
      img.dim(2) != cfg_.resolution) {
    throw ShapeError("image " + shape_str(img.shape()) + " does not match the configured input [" +
                     std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.resolution) + "," +
                     std::to_string(cfg_.resolution) + "]");
  }
  if (cfg_.is_staged()) return flatten_map(silu((*cf_stem_)(img)));
  const Tensor tokens = stem_ ? conv_stem(img, *stem_) : patchify_baseline(img, cfg_.patch_size, patch_w_, patch_b_);
  if (cls_.defined()) return attach_class_token(tokens, cls_, pos_);
  return pos_.defined() ? add(tokens, pos_) : tokens;
}

Tensor Model::head(const Tensor& tokens) const {
  const Tensor normed = norm_f_(tokens);
  const Tensor pooled = cfg_.use_class_token ? slice_rows(normed, 0, 1) : mean_rows(normed);
  return head_(pooled);
}

Tensor Model::forward_single(const Tensor& img) const {
  Tensor x = embed(img);
  if (cfg_.is_staged()) {
    for (const auto& st : stages_) {
      if (st.downsample) {
        const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(x.dim(0)))));
        x = flatten_map(silu((*st.downsample)(unflatten_tokens(x, side, side))));
      }
      for (const auto& b : st.blocks) x = apply_block(x, b);
    }
  } else {
    for (const auto& b : blocks_) x = apply_block(x, b);
  }
  return head(x);
}

Tensor Model::forward(const Tensor& images) const {
  if (images.rank() != 4) throw DimensionError("forward expects [B,C,H,W], got " + shape_str(images.shape()));
  const std::size_t b = images.dim(0);
  const std::size_t per = images.numel() / b;
  const Shape one{images.dim(1), images.dim(2), images.dim(3)};
  std::vector<Tensor> rows;
  rows.reserve(b);
  const Tensor flat = reshape(images, {b, per});
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor img = reshape(slice_rows(flat, i, 1), one);
    rows.push_back(forward_single(img));
  }
  return concat_rows(rows);
}

}  // namespace vimf
