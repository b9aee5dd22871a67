#include <cmath>

#include "vimf/model.hpp"

namespace vimf {

void Breakdown::add(const std::string& group, std::size_t value) {
  total += value;
  for (auto& e : groups) {
    if (e.group == group) {
      e.value += value;
      return;
    }
  }
  groups.push_back({group, value});
}

std::size_t Breakdown::get(const std::string& group) const {
  for (const auto& e : groups) {
    if (e.group == group) return e.value;
  }
  return 0;
}

namespace {

std::string group_of(const std::string& name) {
  const auto first = name.find('.');
  if (first == std::string::npos) return name;
  const std::string head = name.substr(0, first);
  if (head == "blocks" || head == "stages") {
    const auto second = name.find('.', first + 1);
    return name.substr(0, second);
  }
  return head;
}

std::size_t out_extent(std::size_t in, const ConvSpec& s) { return (in + 2 * s.padding - s.kernel) / s.stride + 1; }

}  // namespace

Breakdown count_params(const Model& model) {
  Breakdown b;
  for (const auto& p : model.parameters()) {
    if (p.trainable) b.add(group_of(p.name), p.tensor.numel());
  }
  return b;
}

std::size_t conv2d_macs(std::size_t in_channels, std::size_t in_extent, const ConvSpec& spec) {
  const std::size_t o = out_extent(in_extent, spec);
  return o * o * spec.out_channels * in_channels * spec.kernel * spec.kernel;
}

std::size_t stem_macs(const StemConfig& stem, std::size_t resolution) {
  std::size_t macs = 0, extent = resolution, channels = stem.in_channels;
  for (const auto& block : stem.blocks) {
    for (const auto& c : block.convs) {
      macs += conv2d_macs(channels, extent, c);
      extent = out_extent(extent, c);
      channels = c.out_channels;
    }
  }
  return macs;
}

std::size_t stem_params(const StemConfig& stem) {
  std::size_t n = 0, channels = stem.in_channels;
  for (const auto& block : stem.blocks) {
    for (const auto& c : block.convs) {
      n += c.kernel * c.kernel * channels * c.out_channels + c.out_channels;
      channels = c.out_channels;
    }
  }
  return n;
}

std::size_t patchify_macs(std::size_t resolution, std::size_t patch, std::size_t in_channels, std::size_t dim) {
  const std::size_t side = resolution / patch;
  return side * side * patch * patch * in_channels * dim;
}

std::size_t scan_macs(std::size_t length, std::size_t inner, std::size_t state) { return 3 * length * inner * state; }

std::size_t fft2d_macs(std::size_t rows, std::size_t cols) {
  const double hw = static_cast<double>(rows * cols);
  return static_cast<std::size_t>(std::llround(5.0 * hw * std::log2(hw)));
}

std::size_t block_macs(const BlockConfig& cfg, std::size_t tokens) {
  const std::size_t l = tokens, d = cfg.dim, di = cfg.inner(), n = cfg.state, r = cfg.resolved_dt_rank();
  const std::size_t k = cfg.variant == BlockVariant::vim_f_cf ? 0 : cfg.conv_width;
  std::size_t macs = l * d * 2 * di + l * di * d;
  const std::size_t branch = l * di * k + l * di * (r + 2 * n) + l * r * di + scan_macs(l, di, n);
  macs += 2 * branch;
  if (cfg.variant != BlockVariant::vim) {
    const std::size_t spatial = l - (cfg.has_class_token ? 1 : 0);
    macs += cfg.fft_mode == FftMode::per_channel ? d * fft2d_macs(cfg.grid.rows, cfg.grid.cols)
                                                 : fft2d_macs(spatial, d);
    macs += l * d * d;
  }
  if (cfg.variant == BlockVariant::vim_f_h) {
    const std::size_t dh = d / cfg.heads;
    macs += 4 * l * d * d + 2 * l * d * dh;
  }
  return macs;
}

Breakdown estimate_macs(const ModelConfig& cfg, std::size_t resolution) {
  ModelConfig c = cfg;
  c.resolution = resolution;
  c.validate();
  Breakdown b;
  std::size_t final_dim = c.dim;
  if (c.is_staged()) {
    const auto& dims = c.stage_dims;
    const ConvSpec s0{7, 4, 3, dims[0]};
    b.add("stem", conv2d_macs(c.in_channels, resolution, s0));
    std::size_t extent = out_extent(resolution, s0);
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string g = "stages." + std::to_string(s);
      if (s > 0) {
        const ConvSpec ds{2, 2, 0, dims[s]};
        b.add(g, conv2d_macs(dims[s - 1], extent, ds));
        extent = out_extent(extent, ds);
      }
      const BlockConfig bc = c.block_config(BlockVariant::vim_f_cf, dims[s], Grid{extent, extent}, false);
      for (std::size_t i = 0; i < c.stage_depths[s]; ++i) b.add(g, block_macs(bc, extent * extent));
    }
    final_dim = dims.back();
  } else {
    if (c.stem == StemKind::conv) {
      b.add("stem", stem_macs(c.stem_config(), resolution));
    } else {
      b.add("patch_embed", patchify_macs(resolution, c.patch_size, c.in_channels, c.dim));
    }
    const std::size_t side = c.token_grid_extent();
    const std::size_t l = side * side + (c.use_class_token ? 1 : 0);
    const std::size_t n_f = c.f_block_count();
    for (std::size_t i = 0; i < c.depth; ++i) {
      const BlockVariant v = i < n_f ? c.variant : BlockVariant::vim;
      b.add("blocks." + std::to_string(i), block_macs(c.block_config(v, c.dim, Grid{side, side}, c.use_class_token), l));
    }
  }
  b.add("head", final_dim * c.num_classes);
  return b;
}

}  // namespace vimf
