#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "vimf/blocks.hpp"
#include "vimf/embed.hpp"
#include "vimf/ssm.hpp"

namespace vimf {

enum class StemKind { conv, patch };

struct ModelConfig {
  BlockVariant variant = BlockVariant::vim_f;
  std::size_t depth = 4;
  std::size_t dim = 32;
  std::size_t state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;  // 0 -> max(1, ceil(dim / 16))
  double f_block_proportion = 0.25;
  FftMode fft_mode = FftMode::per_channel;
  std::size_t heads = 2;
  bool use_pos_embed = false;
  bool use_class_token = true;
  StemKind stem = StemKind::conv;
  std::size_t patch_size = 16;
  std::vector<std::size_t> stem_channels;  // {c1, c2}; empty -> {dim/4, dim/2}
  std::size_t resolution = 64;
  std::size_t in_channels = 3;
  std::size_t num_classes = 10;
  // Four-stage layout of the conv-free variant.
  std::vector<std::size_t> stage_depths{1, 1, 2, 1};
  std::vector<std::size_t> stage_dims{32, 64, 128, 256};
  bool d_skip = true;
  Discretization rule = Discretization::zoh;
  double alpha_init = 0.1;
  double beta_init = 1.0;

  // Desk-scale defaults: 64x64 input, depth 4, D=32, N=8, 10 classes.
  static ModelConfig desk(BlockVariant variant);
  // Tiny-width ImageNet-sized layout: 224 input, D=192, depth 24, N=16, 1000 classes.
  static ModelConfig tiny_fidelity(BlockVariant variant);

  void validate() const;
  bool is_staged() const { return variant == BlockVariant::vim_f_cf; }
  // Number of leading blocks that use the frequency variant: ceil(depth * proportion).
  std::size_t f_block_count() const;
  StemConfig stem_config() const;
  std::size_t token_grid_extent() const;  // tokens per side after the stem (flat variants)
  BlockConfig block_config(BlockVariant block_variant, std::size_t block_dim, Grid grid, bool class_token) const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::string& path);
  // Names of the fields that differ from `other`.
  std::vector<std::string> diff(const ModelConfig& other) const;
};

BlockVariant parse_variant(const std::string& s);
FftMode parse_fft_mode(const std::string& s);

}  // namespace vimf
