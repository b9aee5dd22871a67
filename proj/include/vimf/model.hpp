#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vimf/blocks.hpp"
#include "vimf/config.hpp"
#include "vimf/embed.hpp"
#include "vimf/nn.hpp"

namespace vimf {

// Transition plus blocks of one stage of the conv-free hierarchy.
struct Stage {
  std::optional<Conv2dParams> downsample;  // 2x2 stride 2, absent on stage 0
  Grid grid;
  std::vector<BlockParams> blocks;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter* find(std::string_view name) const;

  // Tokens fed to the first block: stem output with class token / position embedding.
  Tensor embed(const Tensor& img) const;
  // [3,H,W] -> [1,K]
  Tensor forward_single(const Tensor& img) const;
  // [B,3,H,W] -> [B,K]; samples are processed independently.
  Tensor forward(const Tensor& images) const;

  const std::vector<BlockParams>& blocks() const { return blocks_; }
  const std::vector<Stage>& stages() const { return stages_; }
  std::vector<BlockVariant> block_variants() const;

  // Marks every parameter whose name ends with `suffix` as not trainable.
  std::size_t freeze(std::string_view suffix);

 private:
  Tensor head(const Tensor& tokens) const;

  ModelConfig cfg_;
  std::uint64_t seed_;
  std::vector<Parameter> params_;

  std::optional<ConvStem> stem_;
  Tensor patch_w_, patch_b_;
  Tensor cls_, pos_;
  std::vector<BlockParams> blocks_;

  std::optional<Conv2dParams> cf_stem_;
  std::vector<Stage> stages_;

  LayerNorm norm_f_;
  Linear head_;
};

struct CountEntry {
  std::string group;
  std::size_t value = 0;
};

struct Breakdown {
  std::size_t total = 0;
  std::vector<CountEntry> groups;  // in first-seen order

  void add(const std::string& group, std::size_t value);
  std::size_t get(const std::string& group) const;
};

// Trainable scalars grouped by module path ("stem", "blocks.3", "head", ...).
Breakdown count_params(const Model& model);

// Multiply-accumulate conventions:
//   linear      L * in * out
//   conv2d      H' * W' * Cout * Cin * Kh * Kw
//   causal conv L * D * K
//   selective scan  3 * L * Di * N  (state update, input injection, readout)
//   fft2d       5 * H * W * log2(H * W) per transform, rounded to the nearest integer
//   attention   q/k/v/out projections + 2 * L * D * Dh for the kernelized core
// Elementwise nonlinearities and norms are not counted.
Breakdown estimate_macs(const ModelConfig& cfg, std::size_t resolution);

std::size_t conv2d_macs(std::size_t in_channels, std::size_t in_extent, const ConvSpec& spec);
std::size_t stem_macs(const StemConfig& stem, std::size_t resolution);
std::size_t stem_params(const StemConfig& stem);
std::size_t patchify_macs(std::size_t resolution, std::size_t patch, std::size_t in_channels, std::size_t dim);
std::size_t scan_macs(std::size_t length, std::size_t inner, std::size_t state);
std::size_t fft2d_macs(std::size_t rows, std::size_t cols);
std::size_t block_macs(const BlockConfig& cfg, std::size_t tokens);

}  // namespace vimf
